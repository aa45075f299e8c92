#ifndef AMEC_COMPLEXITY_HPP
#define AMEC_COMPLEXITY_HPP

#include <algorithm>
#include <chrono>
#include <cstdint>
#include <limits>
#include <vector>

#include "amec/convex_oracle.hpp"
#include "amec/freq_alloc.hpp"
#include "amec/rng.hpp"
#include "amec/scenario.hpp"

namespace amec {

struct ComplexityOptions {
  int instances = 10;        // samples per transition slot, from at most 50x as many duration draws
  double min_sample_ms = 2;  // repeat each solve until this much time has passed
};

/// Median timings at one transition slot. `slot` is K+2 for NoTransition.
struct ComplexityRow {
  int slot = 0;
  int samples = 0;
  double alg_us = 0.0;
  double oracle_us = 0.0;
  double ratio = 0.0;  // median of per-instance oracle / alg
  double max_rel_gap = 0.0;
};

namespace detail {

// Fastest single call over repeated runs; robust to preemption.
template <class F>
double time_us(F&& f, double min_ms) {
  using clock = std::chrono::steady_clock;
  const auto start = clock::now();
  double best = std::numeric_limits<double>::infinity();
  int reps = 0;
  while (reps < 3 || std::chrono::duration<double, std::milli>(clock::now() - start).count() < min_ms) {
    const auto t0 = clock::now();
    f();
    best = std::min(best, std::chrono::duration<double, std::micro>(clock::now() - t0).count());
    ++reps;
  }
  return best;
}

inline double median(std::vector<double> v) {
  if (v.empty()) return 0.0;
  std::sort(v.begin(), v.end());
  const std::size_t h = v.size() / 2;
  return v.size() % 2 ? v[h] : 0.5 * (v[h - 1] + v[h]);
}

}  // namespace detail

/// Times allocate_frequencies against the interior-point oracle on the cycles
/// of `sc`, with F_max placed inside each transition interval in turn. Every
/// duration draw is timed at all slots still short of samples, so slow drift
/// in machine speed affects all slots alike.
inline std::vector<ComplexityRow> measure_complexity(const Scenario& sc, const ComplexityOptions& opt = {}) {
  const int k = sc.num_devices();
  const double kappa = sc.params.server_energy_coef;
  std::vector<double> cycles;
  for (const auto& t : sc.tasks) cycles.push_back(t.cycles());
  const int slots = k;  // 3..K+1 and NoTransition as K+2
  std::vector<std::vector<double>> alg_t(slots), ora_t(slots), ratio(slots);
  std::vector<double> gap(slots, 0.0);
  Rng rng(stream_seed(sc.seed, 0x434f4d50ULL));
  for (int draw = 0; draw < 50 * opt.instances; ++draw) {
    TimeAllocation dt = TimeAllocation::zeros(k);
    double total = 0.0;
    for (int m = 0; m <= k + 1; ++m) total += (dt[m] = rng.uniform(0.2, 1.0));
    for (int m = 0; m <= k + 1; ++m) dt[m] *= sc.deadline_s / total;
    const double where = rng.uniform(0.25, 0.75);
    bool done = true;
    for (int slot = 3; slot <= k + 2; ++slot) {
      const auto i = static_cast<std::size_t>(slot - 3);
      if (static_cast<int>(ratio[i].size()) >= opt.instances) continue;
      done = false;
      double f_max = 0.0;
      if (slot == k + 2) {
        f_max = 1.5 * transition_threshold(cycles, dt, k + 1);
      } else {
        const double lo = std::max(transition_threshold(cycles, dt, slot - 1), required_fmax(cycles, dt));
        const double hi = transition_threshold(cycles, dt, slot);
        if (!(hi > lo * (1.0 + 1e-9))) continue;
        f_max = lo + where * (hi - lo);
      }
      if (transition_point(cycles, dt, f_max) !=
          (slot == k + 2 ? TransitionVerdict::none() : TransitionVerdict::at(slot)))
        continue;
      FreqAllocResult a;
      FreqOracleSolution o;
      const double ta = detail::time_us([&] { a = allocate_frequencies(cycles, dt, f_max, kappa); }, opt.min_sample_ms);
      const double to = detail::time_us([&] { o = solve_freq_oracle(cycles, dt, f_max, kappa); }, opt.min_sample_ms);
      alg_t[i].push_back(ta);
      ora_t[i].push_back(to);
      ratio[i].push_back(to / ta);
      gap[i] = std::max(gap[i], std::fabs(a.energy - o.energy) / o.energy);
    }
    if (done) break;
  }
  std::vector<ComplexityRow> rows;
  for (int slot = 3; slot <= k + 2; ++slot) {
    const auto i = static_cast<std::size_t>(slot - 3);
    if (ratio[i].empty()) continue;
    ComplexityRow row;
    row.slot = slot;
    row.samples = static_cast<int>(ratio[i].size());
    row.alg_us = detail::median(alg_t[i]);
    row.oracle_us = detail::median(ora_t[i]);
    row.ratio = detail::median(ratio[i]);
    row.max_rel_gap = gap[i];
    rows.push_back(row);
  }
  return rows;
}

}  // namespace amec

#endif  // AMEC_COMPLEXITY_HPP
