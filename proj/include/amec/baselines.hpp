#ifndef AMEC_BASELINES_HPP
#define AMEC_BASELINES_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <thread>
#include <vector>

#include "amec/barrier.hpp"
#include "amec/error.hpp"
#include "amec/gbd.hpp"
#include "amec/rng.hpp"
#include "amec/scenario.hpp"
#include "amec/time_alloc.hpp"

namespace amec {

enum class Scheme { Proposed, JSORA, Sync, Random, Exhaustive };

inline std::string to_string(Scheme s) {
  switch (s) {
    case Scheme::Proposed: return "Proposed";
    case Scheme::JSORA: return "JSORA";
    case Scheme::Sync: return "Sync";
    case Scheme::Random: return "Random";
    case Scheme::Exhaustive: return "Exhaustive";
  }
  return "?";
}

inline Scheme parse_scheme(const std::string& name) {
  for (Scheme s : {Scheme::Proposed, Scheme::JSORA, Scheme::Sync, Scheme::Random, Scheme::Exhaustive}) {
    std::string a = to_string(s), b = name;
    std::transform(a.begin(), a.end(), a.begin(), [](unsigned char c) { return std::tolower(c); });
    std::transform(b.begin(), b.end(), b.begin(), [](unsigned char c) { return std::tolower(c); });
    if (a == b) return s;
  }
  throw ConfigError("schemes", "unknown scheme '" + name + "'");
}

enum class SchemeStatus { Ok, Infeasible, IterationLimit, Stalled, Failed };

inline std::string to_string(SchemeStatus s) {
  switch (s) {
    case SchemeStatus::Ok: return "ok";
    case SchemeStatus::Infeasible: return "infeasible";
    case SchemeStatus::IterationLimit: return "iteration_limit";
    case SchemeStatus::Stalled: return "stalled";
    case SchemeStatus::Failed: return "failed";
  }
  return "?";
}

struct SchemeResult {
  Scheme scheme = Scheme::Proposed;
  SchemeStatus status = SchemeStatus::Ok;
  double energy = std::numeric_limits<double>::quiet_NaN();
  Schedule schedule;
  TimeAllocation dt;
  FrequencyPlan plan;
  int iterations = 0;
  double ub = std::numeric_limits<double>::quiet_NaN();
  double lb = std::numeric_limits<double>::quiet_NaN();
  std::string message;

  bool solved() const { return status != SchemeStatus::Infeasible && status != SchemeStatus::Failed; }
};

// ---------------------------------------------------------------------------
// JSORA: every task keeps one frequency from arrival to the deadline.

/// Scaled JSORA program over tau: minimise sum_n w_n^3 / S_n^2 with
/// S_n = sum_{m>n} tau_m.
///
/// Constraints: causality (rows 0..K-1), capacity sum_n w_n / S_n <= phi
/// (row K, the last slot carries every task), deadline (row K+1).
class JsoraProgram {
 public:
  JsoraProgram(std::vector<double> work, std::vector<double> demand, double phi)
      : w_(std::move(work)), demand_(std::move(demand)), phi_(phi), k_(static_cast<int>(w_.size())) {}

  int dim() const { return k_ + 2; }
  int num_constraints() const { return k_ + 2; }
  int num_positive() const { return k_ + 2; }
  int causality_row(int n) const { return n - 1; }
  int capacity_row() const { return k_; }
  int deadline_row() const { return k_ + 1; }

  double tail(const Vec& x, int n) const {
    double s = 0.0;
    for (int m = n + 1; m <= k_ + 1; ++m) s += x(m);
    return s;
  }

  double objective(const Vec& x) const {
    double v = 0.0;
    for (int n = 1; n <= k_; ++n) {
      const double s = tail(x, n);
      v += cube(n) / (s * s);
    }
    return v;
  }
  void objective_derivs(const Vec& x, Vec& g, Mat& h) const {
    g.setZero(dim());
    h.setZero(dim(), dim());
    for (int n = 1; n <= k_; ++n) {
      const double s = tail(x, n);
      const double d1 = -2.0 * cube(n) / (s * s * s);
      const double d2 = 6.0 * cube(n) / (s * s * s * s);
      g.tail(k_ + 1 - n).array() += d1;
      h.bottomRightCorner(k_ + 1 - n, k_ + 1 - n).array() += d2;
    }
  }
  void constraint_values(const Vec& x, Vec& c) const {
    c.setZero(num_constraints());
    double prefix = 0.0;
    for (int n = 1; n <= k_; ++n) {
      prefix += x(n - 1);
      c(causality_row(n)) = demand_[static_cast<std::size_t>(n - 1)] / (x(n) * x(n)) - prefix;
    }
    double load = 0.0;
    for (int n = 1; n <= k_; ++n) load += w(n) / tail(x, n);
    c(capacity_row()) = load - phi_;
    c(deadline_row()) = x.sum() - 1.0;
  }
  void constraint_jacobian(const Vec& x, Mat& jac) const {
    jac.setZero(num_constraints(), dim());
    for (int n = 1; n <= k_; ++n) {
      jac(causality_row(n), n) = -2.0 * demand_[static_cast<std::size_t>(n - 1)] / (x(n) * x(n) * x(n));
      for (int i = 0; i < n; ++i) jac(causality_row(n), i) = -1.0;
    }
    for (int n = 1; n <= k_; ++n) {
      const double s = tail(x, n);
      jac.row(capacity_row()).tail(k_ + 1 - n).array() -= w(n) / (s * s);
    }
    jac.row(deadline_row()).setOnes();
  }
  void add_constraint_hessians(const Vec& x, const Vec& wts, Mat& h) const {
    for (int n = 1; n <= k_; ++n) {
      const double t = x(n);
      h(n, n) += wts(causality_row(n)) * 6.0 * demand_[static_cast<std::size_t>(n - 1)] / (t * t * t * t);
      const double s = tail(x, n);
      h.bottomRightCorner(k_ + 1 - n, k_ + 1 - n).array() += wts(capacity_row()) * 2.0 * w(n) / (s * s * s);
    }
  }

  Vec initial_point() const { return Vec::Constant(dim(), 1.0 / (k_ + 3)); }

 private:
  double w(int n) const { return w_[static_cast<std::size_t>(n - 1)]; }
  double cube(int n) const { return w(n) * w(n) * w(n); }
  std::vector<double> w_;
  std::vector<double> demand_;
  double phi_;
  int k_;
};

namespace detail {

/// min over 0 < S <= T of kappa F^3 / S^2 + omega F / S + sigma S.
inline double jsora_row_min(double kappa, double cycles, double omega, double sigma, double horizon) {
  auto value = [&](double s) { return kappa * cycles * cycles * cycles / (s * s) + omega * cycles / s + sigma * s; };
  if (!(sigma > 0.0)) return value(horizon);
  // Unique positive root of sigma S^3 - omega F S - 2 kappa F^3, reached from above.
  double s = std::sqrt(omega * cycles / sigma) + std::cbrt(2.0 * kappa * cycles * cycles * cycles / sigma);
  for (int it = 0; it < 100; ++it) {
    const double f = sigma * s * s * s - omega * cycles * s - 2.0 * kappa * cycles * cycles * cycles;
    const double fp = 3.0 * sigma * s * s - omega * cycles;
    const double next = s - f / fp;
    if (!(next < s) || !(next > 0.0)) break;
    s = next;
  }
  return value(std::min(s, horizon));
}

}  // namespace detail

/// Per-schedule JSORA problem and its cuts.
class JsoraPrimal {
 public:
  JsoraPrimal(const Scenario& sc, const GbdOptions& opt) : sc_(sc), opt_(opt) {}

  PrimalStep solve(const Schedule& sched, int iteration) const {
    const int k = sc_.num_devices();
    const auto s = detail::joint_scaling(sc_, sched);
    const JsoraProgram prog(s.work, s.demand, s.phi);
    Vec start;
    if (!find_interior_point(prog, prog.initial_point(), start)) throw InfeasibleError("schedule is infeasible");
    BarrierOptions bo;
    const BarrierResult r = barrier_solve(prog, start, bo);
    if (!r.converged) throw NonConvergenceError("restricted program did not reach its gap tolerance");

    const double hp = sc_.params.harvest_power();
    const double kappa = sc_.params.server_energy_coef;
    PrimalStep step;
    PrimalSolution& p = step.solution;
    p.schedule = sched;
    p.dt = TimeAllocation::zeros(k);
    for (int m = 0; m <= k + 1; ++m) p.dt[m] = s.horizon * r.x(m);
    p.x = ComputationPlan(k);
    p.f = FrequencyPlan(k);
    const auto cycles = ordered_cycles(sc_, sched);
    std::vector<double> span(static_cast<std::size_t>(k));
    for (int n = 1; n <= k; ++n) {
      span[static_cast<std::size_t>(n - 1)] = p.dt.span(n + 1, k + 1);
      const double f = cycles[static_cast<std::size_t>(n - 1)] / span[static_cast<std::size_t>(n - 1)];
      for (int m = n + 1; m <= k + 1; ++m) {
        p.f(n, m) = f;
        p.x(n, m) = f * p.dt[m];
      }
    }
    p.energy = eval_energy(p.f, p.dt, kappa);
    p.duals.rho.resize(static_cast<std::size_t>(k));
    for (int n = 1; n <= k; ++n) {
      const double h = sc_.tasks[static_cast<std::size_t>(sched.device_at(n))].channel_gain;
      p.duals.rho[static_cast<std::size_t>(n - 1)] = s.eref * r.lambda(prog.causality_row(n)) / (s.horizon * h * hp);
    }
    const double omega = std::max(s.eref * r.lambda(prog.capacity_row()) * s.horizon / s.fs, 0.0);
    p.duals.omega.assign(static_cast<std::size_t>(k) + 2, 0.0);
    p.duals.omega[static_cast<std::size_t>(k) + 1] = omega;
    p.duals.xi = s.eref * r.lambda(prog.deadline_row()) / s.horizon;
    p.converged = true;
    p.iterations = r.newton_steps;

    // Row multipliers of S_n <= sum_{m>n} dt_m from stationarity in S_n.
    std::vector<double> sigma(static_cast<std::size_t>(k));
    for (int n = 1; n <= k; ++n) {
      const double f = cycles[static_cast<std::size_t>(n - 1)];
      const double sn = span[static_cast<std::size_t>(n - 1)];
      sigma[static_cast<std::size_t>(n - 1)] = 2.0 * kappa * f * f * f / (sn * sn * sn) + omega * f / (sn * sn);
    }
    p.duals.beta = sigma;

    DualCutParts parts;
    const double xi = std::max(p.duals.xi, 0.0);
    parts.rho_bar = detail::rho_bar(p, sc_);
    parts.constant = -xi * sc_.deadline_s - omega * sc_.f_max_hz;
    parts.slot_base.assign(static_cast<std::size_t>(k) + 2, xi);
    const Scenario& sc = sc_;
    parts.row_value = [&sc, sigma, omega, kappa](int d, int n) {
      return detail::jsora_row_min(kappa, sc.tasks[static_cast<std::size_t>(d)].cycles(), omega,
                                   sigma[static_cast<std::size_t>(n - 1)], sc.deadline_s);
    };
    parts.gain_row = [sigma](int n, int) { return sigma[static_cast<std::size_t>(n - 1)]; };
    if (opt_.cut_form != CutForm::SlotDual) step.cuts.emplace_back(build_device_cut(parts, sc_, sched, iteration));
    if (opt_.cut_form != CutForm::DeviceDual) step.cuts.emplace_back(build_slot_cut(parts, sc_, iteration));
    return step;
  }

  Cut exclude(const Schedule& sched, int iteration) const { return exclusion_cut(sc_, sched, opt_, iteration); }

 private:
  const Scenario& sc_;
  const GbdOptions& opt_;
};

// ---------------------------------------------------------------------------
// Sync: the server computes only after the last arrival, in slot K+1.

class SyncPrimal {
 public:
  SyncPrimal(const Scenario& sc, const GbdOptions& opt) : sc_(sc), opt_(opt) {}

  PrimalStep solve(const Schedule& sched, int iteration) const {
    const int k = sc_.num_devices();
    const auto uk = static_cast<std::size_t>(k);
    const auto s = detail::joint_scaling(sc_, sched);
    std::vector<double> qs(uk + 2, 0.0), load(uk + 2, 0.0);
    double cube_sum = 0.0;
    double total = 0.0;
    for (const auto& t : sc_.tasks) {
      const double y = t.cycles() / s.fs;
      qs[uk + 1] += y * y * y;
      load[uk + 1] += y;
      cube_sum += std::pow(t.cycles(), 3);
      total += t.cycles();
    }
    const TimesProgram prog(qs, load, s.demand, s.phi);
    Vec start;
    if (!find_interior_point(prog, Vec::Constant(k + 2, 1.0 / (k + 3)), start))
      throw InfeasibleError("schedule is infeasible");
    BarrierOptions bo;
    bo.gap_tol = 1e-12;
    const BarrierResult r = barrier_solve(prog, start, bo);
    if (!r.converged) throw NonConvergenceError("restricted program did not reach its gap tolerance");

    const double hp = sc_.params.harvest_power();
    const double kappa = sc_.params.server_energy_coef;
    PrimalStep step;
    PrimalSolution& p = step.solution;
    p.schedule = sched;
    p.dt = TimeAllocation::zeros(k);
    for (int m = 0; m <= k + 1; ++m) p.dt[m] = s.horizon * r.x(m);
    p.x = ComputationPlan(k);
    p.f = FrequencyPlan(k);
    const auto cycles = ordered_cycles(sc_, sched);
    for (int n = 1; n <= k; ++n) {
      p.x(n, k + 1) = cycles[static_cast<std::size_t>(n - 1)];
      p.f(n, k + 1) = p.x(n, k + 1) / p.dt[k + 1];
    }
    p.energy = eval_energy(p.f, p.dt, kappa);
    p.duals.rho.resize(uk);
    for (int n = 1; n <= k; ++n) {
      const double h = sc_.tasks[static_cast<std::size_t>(sched.device_at(n))].channel_gain;
      p.duals.rho[static_cast<std::size_t>(n - 1)] = s.eref * r.lambda(prog.causality_row(n)) / (s.horizon * h * hp);
    }
    p.duals.omega.assign(uk + 2, 0.0);
    for (int m = 2; m <= k + 1; ++m)
      p.duals.omega[static_cast<std::size_t>(m)] = std::max(s.eref * r.lambda(prog.capacity_row(m)) / s.fs, 0.0);
    p.duals.beta.assign(uk, 0.0);
    p.duals.xi = s.eref * r.lambda(prog.deadline_row()) / s.horizon;
    p.converged = true;
    p.iterations = r.newton_steps;

    DualCutParts parts;
    const double xi = std::max(p.duals.xi, 0.0);
    parts.rho_bar = detail::rho_bar(p, sc_);
    parts.constant = -xi * sc_.deadline_s + p.duals.omega[uk + 1] * total;
    parts.tail_curvature = kappa * cube_sum;
    parts.slot_base.assign(uk + 2, xi);
    for (std::size_t m = 2; m < uk + 2; ++m) parts.slot_base[m] -= sc_.f_max_hz * p.duals.omega[m];
    parts.row_value = [](int, int) { return 0.0; };
    parts.gain_row = [](int, int) { return 0.0; };
    if (opt_.cut_form != CutForm::SlotDual) step.cuts.emplace_back(build_device_cut(parts, sc_, sched, iteration));
    if (opt_.cut_form != CutForm::DeviceDual) step.cuts.emplace_back(build_slot_cut(parts, sc_, iteration));
    return step;
  }

  Cut exclude(const Schedule& sched, int iteration) const { return exclusion_cut(sc_, sched, opt_, iteration); }

 private:
  const Scenario& sc_;
  const GbdOptions& opt_;
};

// ---------------------------------------------------------------------------
// Scheme drivers

inline SchemeResult from_solution(Scheme scheme, const PrimalSolution& p) {
  SchemeResult r;
  r.scheme = scheme;
  r.energy = p.energy;
  r.schedule = p.schedule;
  r.dt = p.dt;
  r.plan = p.f;
  return r;
}

inline SchemeResult from_report(Scheme scheme, const SolveReport& rep) {
  SchemeResult r = from_solution(scheme, rep.solution);
  r.iterations = rep.iterations;
  r.ub = rep.ub;
  r.lb = rep.lb;
  switch (rep.status) {
    case GbdStatus::Converged: r.status = SchemeStatus::Ok; break;
    case GbdStatus::Stalled: r.status = SchemeStatus::Stalled; break;
    case GbdStatus::IterationLimit: r.status = SchemeStatus::IterationLimit; break;
  }
  return r;
}

inline SchemeResult failed(Scheme scheme, SchemeStatus status, const std::string& why) {
  SchemeResult r;
  r.scheme = scheme;
  r.status = status;
  r.message = why;
  return r;
}

template <class Primal>
SchemeResult run_scheme_gbd(Scheme scheme, const Scenario& sc, const GbdOptions& opt) {
  try {
    return from_report(scheme, run_gbd_with(sc, Primal(sc, opt), opt));
  } catch (const InfeasibleError& e) {
    return failed(scheme, SchemeStatus::Infeasible, e.what());
  } catch (const NonConvergenceError& e) {
    return failed(scheme, SchemeStatus::Failed, e.what());
  }
}

inline SchemeResult solve_proposed(const Scenario& sc, const GbdOptions& opt = {}) {
  return run_scheme_gbd<ProposedPrimal>(Scheme::Proposed, sc, opt);
}

inline SchemeResult solve_jsora(const Scenario& sc, const GbdOptions& opt = {}) {
  return run_scheme_gbd<JsoraPrimal>(Scheme::JSORA, sc, opt);
}

inline SchemeResult solve_sync(const Scenario& sc, const GbdOptions& opt = {}) {
  return run_scheme_gbd<SyncPrimal>(Scheme::Sync, sc, opt);
}

/// Uniform permutation from the seed (Fisher-Yates).
inline Schedule random_schedule(int k, std::uint64_t seed) {
  Rng rng(stream_seed(seed, 0x52414e44ULL));
  std::vector<int> order(static_cast<std::size_t>(k));
  std::iota(order.begin(), order.end(), 0);
  for (int i = k - 1; i > 0; --i) {
    const auto j = static_cast<std::size_t>(rng.below(static_cast<std::uint64_t>(i) + 1));
    std::swap(order[static_cast<std::size_t>(i)], order[j]);
  }
  return Schedule(order);
}

inline SchemeResult solve_random(const Scenario& sc, std::uint64_t seed, const BcdOptions& opt = {}) {
  const Schedule sched = random_schedule(sc.num_devices(), seed);
  try {
    SchemeResult r = from_solution(Scheme::Random, solve_primal_bcd(sc, sched, opt));
    r.iterations = 1;
    return r;
  } catch (const InfeasibleError& e) {
    SchemeResult r = failed(Scheme::Random, SchemeStatus::Infeasible, e.what());
    r.schedule = sched;
    return r;
  } catch (const NonConvergenceError& e) {
    return failed(Scheme::Random, SchemeStatus::Failed, e.what());
  }
}

struct ExhaustiveOptions {
  int max_devices = 8;
  int threads = 1;
  BcdOptions primal;
};

/// Minimum over all K! schedules of the per-schedule optimum. Ties go to the
/// lexicographically smallest order.
inline SchemeResult solve_exhaustive(const Scenario& sc, const ExhaustiveOptions& opt = {}) {
  const int k = sc.num_devices();
  if (k > opt.max_devices)
    throw ConfigError("K", "exhaustive search is capped at K = " + std::to_string(opt.max_devices) +
                               "; use Proposed for larger instances or raise the cap");
  std::vector<std::vector<int>> orders;
  std::vector<int> order(static_cast<std::size_t>(k));
  std::iota(order.begin(), order.end(), 0);
  do orders.push_back(order);
  while (std::next_permutation(order.begin(), order.end()));

  const int workers = std::max(1, std::min<int>(opt.threads, static_cast<int>(orders.size())));
  std::vector<double> energy(orders.size(), std::numeric_limits<double>::infinity());
  auto work = [&](int w) {
    for (std::size_t i = static_cast<std::size_t>(w); i < orders.size(); i += static_cast<std::size_t>(workers)) {
      try {
        energy[i] = solve_primal_bcd(sc, Schedule(orders[i]), opt.primal).energy;
      } catch (const InfeasibleError&) {
      } catch (const NonConvergenceError&) {
      }
    }
  };
  if (workers == 1) {
    work(0);
  } else {
    std::vector<std::thread> pool;
    for (int w = 0; w < workers; ++w) pool.emplace_back(work, w);
    for (auto& t : pool) t.join();
  }
  std::size_t best = orders.size();
  for (std::size_t i = 0; i < orders.size(); ++i)
    if (energy[i] < std::numeric_limits<double>::infinity() && (best == orders.size() || energy[i] < energy[best]))
      best = i;
  if (best == orders.size()) return failed(Scheme::Exhaustive, SchemeStatus::Infeasible, "every schedule is infeasible");
  SchemeResult r = from_solution(Scheme::Exhaustive, solve_primal_bcd(sc, Schedule(orders[best]), opt.primal));
  r.iterations = static_cast<int>(orders.size());
  return r;
}

}  // namespace amec

#endif  // AMEC_BASELINES_HPP
