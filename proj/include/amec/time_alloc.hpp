#ifndef AMEC_TIME_ALLOC_HPP
#define AMEC_TIME_ALLOC_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>
#include <vector>

#include "amec/barrier.hpp"
#include "amec/convex_oracle.hpp"
#include "amec/error.hpp"
#include "amec/freq_alloc.hpp"
#include "amec/scenario.hpp"
#include "amec/slot_matrix.hpp"

namespace amec {

/// Root of (R - x) x^2 h^2 eta P0 - lambda A^3 on (0, 2R/3], where the
/// function is increasing. Throws InfeasibleError when even 2R/3 is short.
inline double psi_root(double remaining_s, double gain, double harvest_power, double lambda, double data_bits,
                       double eps0 = 1e-15) {
  if (!(remaining_s > 0.0)) throw DomainError("psi_root: remaining time must be positive");
  const double need = lambda * data_bits * data_bits * data_bits;
  const double g2 = gain * gain * harvest_power;
  auto psi = [&](double x) { return (remaining_s - x) * x * x * g2 - need; };
  double hi = 2.0 * remaining_s / 3.0;
  if (psi(hi) < 0.0) throw InfeasibleError("energy causality of the first device cannot be met");
  if (need <= 0.0) return 0.0;
  double lo = 0.0;
  while (hi - lo > eps0 * hi) {
    const double mid = 0.5 * (lo + hi);
    if (psi(mid) >= 0.0) hi = mid;
    else lo = mid;
    if (mid == lo && mid == hi) break;
  }
  return hi;
}

/// Slot durations from the stationarity conditions in dt, given computation
/// amounts x (cycles) and the joint multipliers. Slot 1 takes the smallest
/// duration meeting its device's energy causality, slot 0 the remainder.
inline TimeAllocation update_times(const ComputationPlan& x, const PrimalDuals& duals, const Scenario& sc,
                                   const Schedule& sched) {
  const int k = sc.num_devices();
  const auto& p = sc.params;
  const double hp = p.harvest_power();
  auto gain = [&](int n) { return sc.tasks[static_cast<std::size_t>(sched.device_at(n))].channel_gain; };
  auto bits = [&](int n) { return sc.tasks[static_cast<std::size_t>(sched.device_at(n))].data_bits; };
  auto rho = [&](int n) { return duals.rho[static_cast<std::size_t>(n - 1)]; };
  TimeAllocation dt = TimeAllocation::zeros(k);
  for (int i = 2; i <= k + 1; ++i) {
    double cubes = 0.0;
    for (int n = 1; n < i; ++n) cubes += x(n, i) * x(n, i) * x(n, i);
    double num = 2.0 * p.server_energy_coef * cubes;
    double den = duals.xi - duals.omega[static_cast<std::size_t>(i)] * sc.f_max_hz;
    if (i <= k) {
      num += 2.0 * rho(i) * p.tx_energy_coef * std::pow(bits(i), 3) / gain(i);
      for (int n = i + 1; n <= k; ++n) den -= rho(n) * gain(n) * hp;
    }
    if (!(den > 0.0)) {
      std::ostringstream msg;
      msg << "update_times: non-positive denominator in slot " << i;
      throw DomainError(msg.str());
    }
    dt[i] = std::cbrt(num / den);
  }
  const double remaining = sc.deadline_s - dt.span(2, k + 1);
  if (!(remaining > 0.0)) throw InfeasibleError("update_times: compute slots exhaust the deadline");
  dt[1] = psi_root(remaining, gain(1), hp, p.tx_energy_coef, bits(1));
  dt[0] = remaining - dt[1];
  return dt;
}

/// Per-order cycles F_{pi_n}.
inline std::vector<double> ordered_cycles(const Scenario& sc, const Schedule& sched) {
  std::vector<double> f(static_cast<std::size_t>(sc.num_devices()));
  for (int n = 1; n <= sc.num_devices(); ++n)
    f[static_cast<std::size_t>(n - 1)] = sc.tasks[static_cast<std::size_t>(sched.device_at(n))].cycles();
  return f;
}

/// Time block of the joint problem in scaled units: minimise sum_m q_m / tau_m^2
/// over tau with computation fixed.
class TimesProgram {
 public:
  TimesProgram(std::vector<double> cube_sums, std::vector<double> load, std::vector<double> demand, double phi)
      : q_(std::move(cube_sums)), load_(std::move(load)), demand_(std::move(demand)), phi_(phi) {
    k_ = static_cast<int>(demand_.size());
  }
  int dim() const { return k_ + 2; }
  int num_constraints() const { return 2 * k_ + 1; }
  int num_positive() const { return k_ + 2; }
  int causality_row(int n) const { return n - 1; }
  int capacity_row(int m) const { return k_ + m - 2; }
  int deadline_row() const { return 2 * k_; }

  double objective(const Vec& x) const {
    double s = 0.0;
    for (int m = 2; m <= k_ + 1; ++m) s += q(m) / (x(m) * x(m));
    return s;
  }
  void objective_derivs(const Vec& x, Vec& g, Mat& h) const {
    g.setZero(dim());
    h.setZero(dim(), dim());
    for (int m = 2; m <= k_ + 1; ++m) {
      const double t = x(m);
      g(m) = -2.0 * q(m) / (t * t * t);
      h(m, m) = 6.0 * q(m) / (t * t * t * t);
    }
  }
  void constraint_values(const Vec& x, Vec& c) const {
    c.setZero(num_constraints());
    double prefix = 0.0;
    for (int n = 1; n <= k_; ++n) {
      prefix += x(n - 1);
      c(causality_row(n)) = demand_[static_cast<std::size_t>(n - 1)] / (x(n) * x(n)) - prefix;
    }
    for (int m = 2; m <= k_ + 1; ++m) c(capacity_row(m)) = load_[static_cast<std::size_t>(m)] - phi_ * x(m);
    c(deadline_row()) = x.sum() - 1.0;
  }
  void constraint_jacobian(const Vec& x, Mat& jac) const {
    jac.setZero(num_constraints(), dim());
    for (int n = 1; n <= k_; ++n) {
      jac(causality_row(n), n) = -2.0 * demand_[static_cast<std::size_t>(n - 1)] / (x(n) * x(n) * x(n));
      for (int i = 0; i < n; ++i) jac(causality_row(n), i) = -1.0;
    }
    for (int m = 2; m <= k_ + 1; ++m) jac(capacity_row(m), m) = -phi_;
    jac.row(deadline_row()).setOnes();
  }
  void add_constraint_hessians(const Vec& x, const Vec& w, Mat& h) const {
    for (int n = 1; n <= k_; ++n) {
      const double t = x(n);
      h(n, n) += w(causality_row(n)) * 6.0 * demand_[static_cast<std::size_t>(n - 1)] / (t * t * t * t);
    }
  }

 private:
  double q(int m) const { return q_[static_cast<std::size_t>(m)]; }
  std::vector<double> q_;
  std::vector<double> load_;
  std::vector<double> demand_;
  double phi_;
  int k_ = 0;
};

struct BcdOptions {
  double tol = 1e-6;        // relative energy change that ends the alternation
  int max_iter = 50;
  double kkt_tol = 1e-6;    // joint KKT residual (scaled) accepted without the fallback
  double bisection_tol = 1e-5;
  int freq_max_iter = 10000;
};

namespace detail {

/// Replaces (dt_0, dt_1) by the smallest causality-feasible dt_1 on the same budget.
inline void canonical_first_slot(const Scenario& sc, PrimalSolution& p) {
  const auto& t = sc.tasks[static_cast<std::size_t>(p.schedule.device_at(1))];
  const double budget = p.dt[0] + p.dt[1];
  try {
    const double d1 = psi_root(budget, t.channel_gain, sc.params.harvest_power(), sc.params.tx_energy_coef,
                               t.data_bits);
    if (d1 <= p.dt[1]) {
      p.dt[1] = d1;
      p.dt[0] = budget - d1;
    }
  } catch (const InfeasibleError&) {
  }
}

}  // namespace detail

/// Joint durations and computation for one schedule by alternating the
/// frequency allocator (durations fixed) with the time block (computation
/// fixed). The result is accepted when its joint KKT residual is below
/// kkt_tol; otherwise the interior-point solve of the joint problem is used.
inline PrimalSolution solve_primal_bcd(const Scenario& sc, const Schedule& sched, const BcdOptions& opt = {}) {
  const int k = sc.num_devices();
  if (sched.size() != k) throw DomainError("solve_primal_bcd: schedule size mismatch");
  const auto s = detail::joint_scaling(sc, sched);
  const auto joint = ScaledProgram::joint(s.work, s.demand, s.phi, false);
  Vec start;
  if (!find_interior_point(joint, joint.initial_point(), start)) throw InfeasibleError("schedule is infeasible");

  const auto cycles = ordered_cycles(sc, sched);
  const double kappa = sc.params.server_energy_coef;
  FreqAllocOptions fopt;
  fopt.bisection_tol = opt.bisection_tol;
  fopt.max_iter = opt.freq_max_iter;

  PrimalSolution cur;
  cur.schedule = sched;
  cur.dt = TimeAllocation::zeros(k);
  for (int m = 0; m <= k + 1; ++m) cur.dt[m] = s.horizon * start(joint.tau_index(m));

  double energy = std::numeric_limits<double>::infinity();
  bool have = false;
  int it = 0;
  for (; it < opt.max_iter; ++it) {
    FreqAllocResult fa;
    try {
      fa = allocate_frequencies(cycles, cur.dt, sc.f_max_hz, kappa, fopt);
    } catch (const Error&) {
      break;
    }
    cur.f = fa.plan;
    cur.x = ComputationPlan(k);
    for (int n = 1; n <= k; ++n)
      for (int m = n + 1; m <= k + 1; ++m) cur.x(n, m) = fa.plan(n, m) * cur.dt[m];
    cur.energy = fa.energy;
    cur.duals.beta = fa.duals.beta;

    // Time block with x fixed.
    std::vector<double> qs(static_cast<std::size_t>(k) + 2, 0.0), load(static_cast<std::size_t>(k) + 2, 0.0);
    for (int m = 2; m <= k + 1; ++m)
      for (int n = 1; n < m; ++n) {
        const double y = cur.x(n, m) / s.fs;
        qs[static_cast<std::size_t>(m)] += y * y * y;
        load[static_cast<std::size_t>(m)] += y;
      }
    TimesProgram tp(qs, load, s.demand, s.phi);
    Vec tau0(k + 2);
    for (int m = 0; m <= k + 1; ++m) tau0(m) = std::max(cur.dt[m] / s.horizon, 1e-12);
    Vec tau_start;
    if (!find_interior_point(tp, tau0, tau_start)) break;
    BarrierOptions bo;
    bo.gap_tol = 1e-12;
    const BarrierResult tr = barrier_solve(tp, tau_start, bo);
    if (!tr.converged) break;

    TimeAllocation next = TimeAllocation::zeros(k);
    for (int m = 0; m <= k + 1; ++m) next[m] = s.horizon * tr.x(m);
    cur.duals.rho.assign(static_cast<std::size_t>(k), 0.0);
    cur.duals.omega.assign(static_cast<std::size_t>(k) + 2, 0.0);
    for (int n = 1; n <= k; ++n) {
      const double h = sc.tasks[static_cast<std::size_t>(sched.device_at(n))].channel_gain;
      cur.duals.rho[static_cast<std::size_t>(n - 1)] =
          s.eref * tr.lambda(tp.causality_row(n)) / (s.horizon * h * sc.params.harvest_power());
    }
    for (int m = 2; m <= k + 1; ++m)
      cur.duals.omega[static_cast<std::size_t>(m)] = s.eref * tr.lambda(tp.capacity_row(m)) / s.fs;
    cur.duals.xi = s.eref * tr.lambda(tp.deadline_row()) / s.horizon;
    have = true;

    const double next_energy = s.eref * tr.objective;
    const bool small = energy - next_energy <= opt.tol * next_energy;
    cur.dt = next;
    energy = std::min(energy, cur.energy);
    if (small && it > 0) {
      ++it;
      break;
    }
    energy = next_energy;
  }

  if (have) {
    // Re-align the computation with the final durations.
    try {
      auto fa = allocate_frequencies(cycles, cur.dt, sc.f_max_hz, kappa, fopt);
      cur.f = fa.plan;
      for (int n = 1; n <= k; ++n)
        for (int m = n + 1; m <= k + 1; ++m) cur.x(n, m) = fa.plan(n, m) * cur.dt[m];
      cur.energy = fa.energy;
      cur.duals.beta = fa.duals.beta;
      cur.kkt_residual = kkt_residual(sc, cur);
    } catch (const Error&) {
      have = false;
    }
  }
  cur.iterations = it;
  if (have && cur.kkt_residual <= opt.kkt_tol) {
    cur.converged = true;
    detail::canonical_first_slot(sc, cur);
    return cur;
  }
  PrimalSolution fb = solve_primal_oracle(sc, sched);
  fb.used_fallback = true;
  fb.iterations += it;
  detail::canonical_first_slot(sc, fb);
  return fb;
}

}  // namespace amec

#endif  // AMEC_TIME_ALLOC_HPP
