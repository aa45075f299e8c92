#ifndef AMEC_SLOT_MATRIX_HPP
#define AMEC_SLOT_MATRIX_HPP

#include <cmath>
#include <vector>

namespace amec {

/// Upper-triangular (order n, slot m) table with 1 <= n <= K, n < m <= K+1.
///
/// Holds both frequency plans (Hz) and computation plans (cycles). Entries
/// outside the triangle are kept at zero and are never read by the solvers.
class SlotMatrix {
 public:
  SlotMatrix() = default;
  explicit SlotMatrix(int num_devices)
      : k_(num_devices), data_(static_cast<std::size_t>(num_devices) * static_cast<std::size_t>(num_devices + 2), 0.0) {}

  int num_devices() const noexcept { return k_; }

  double operator()(int n, int m) const { return data_[index(n, m)]; }
  double& operator()(int n, int m) { return data_[index(n, m)]; }

  /// Sum over orders n < m of column m.
  double column_sum(int m) const {
    double s = 0.0;
    for (int n = 1; n < m && n <= k_; ++n) s += (*this)(n, m);
    return s;
  }

  double row_sum(int n) const {
    double s = 0.0;
    for (int m = n + 1; m <= k_ + 1; ++m) s += (*this)(n, m);
    return s;
  }

  double max_abs() const {
    double v = 0.0;
    for (double d : data_) v = std::fmax(v, std::fabs(d));
    return v;
  }

 private:
  std::size_t index(int n, int m) const {
    return static_cast<std::size_t>(n - 1) * static_cast<std::size_t>(k_ + 2) + static_cast<std::size_t>(m);
  }

  int k_ = 0;
  std::vector<double> data_;
};

using FrequencyPlan = SlotMatrix;
using ComputationPlan = SlotMatrix;

}  // namespace amec

#endif  // AMEC_SLOT_MATRIX_HPP
