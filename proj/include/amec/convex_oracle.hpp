#ifndef AMEC_CONVEX_ORACLE_HPP
#define AMEC_CONVEX_ORACLE_HPP

#include <algorithm>
#include <cmath>
#include <span>
#include <sstream>
#include <vector>

#include "amec/barrier.hpp"
#include "amec/error.hpp"
#include "amec/freq_alloc.hpp"
#include "amec/scenario.hpp"
#include "amec/slot_matrix.hpp"

namespace amec {

struct ConvexSolution {
  Vec point;
  double objective = 0.0;
  Vec duals;  // one per inequality constraint of the program
  double kkt_residual = 0.0;
  int iterations = 0;  // Newton steps
  bool converged = false;
};

/// The scaled program shared by the three oracle problems.
///
/// Variables are all non-negative: slot durations tau = dt/T (when not fixed),
/// computation y_{n,m} = x_{n,m}/Fs for 2 <= m <= K+1, n < m, and for the
/// slack variant one zeta and one iota per order position.
///
/// Constraints, in order:
///   causality   c_n / tau_n^2 - sum_{i<n} tau_i - zeta_n <= 0     (joint only)
///   capacity    sum_n y_{n,m} - phi tau_m <= 0                    (per slot with variables)
///   completion  w_n - sum_m y_{n,m} - iota_n <= 0
///   deadline    sum tau - 1 <= 0                                  (joint only)
class ScaledProgram {
 public:
  /// Fixed-duration program: tau given, minimise sum y^3 / tau^2.
  static ScaledProgram fixed_times(std::vector<double> work, std::vector<double> tau, double phi) {
    ScaledProgram p;
    p.k_ = static_cast<int>(work.size());
    p.work_ = std::move(work);
    p.tau_fixed_ = std::move(tau);
    p.phi_ = phi;
    p.joint_ = false;
    p.build();
    return p;
  }
  /// Joint program over (tau, y); slack=true gives the l1 feasibility variant.
  static ScaledProgram joint(std::vector<double> work, std::vector<double> demand, double phi, bool slack) {
    ScaledProgram p;
    p.k_ = static_cast<int>(work.size());
    p.work_ = std::move(work);
    p.demand_ = std::move(demand);
    p.phi_ = phi;
    p.joint_ = true;
    p.slack_ = slack;
    p.build();
    return p;
  }

  int dim() const { return n_var_; }
  int num_constraints() const { return n_con_; }
  int num_positive() const { return n_var_; }
  int num_devices() const { return k_; }
  bool is_joint() const { return joint_; }
  bool has_slack() const { return slack_; }

  /// Variable indices, -1 when absent.
  int tau_index(int m) const { return joint_ ? m : -1; }
  int y_index(int n, int m) const { return y_idx_[static_cast<std::size_t>((n - 1) * (k_ + 2) + m)]; }
  int zeta_index(int n) const { return slack_ ? slack0_ + n - 1 : -1; }
  int iota_index(int n) const { return slack_ ? slack0_ + k_ + n - 1 : -1; }
  /// Constraint rows, -1 when absent.
  int causality_row(int n) const { return joint_ ? n - 1 : -1; }
  int capacity_row(int m) const { return cap_row_[static_cast<std::size_t>(m)]; }
  int completion_row(int n) const { return comp0_ + n - 1; }
  int deadline_row() const { return joint_ ? comp0_ + k_ : -1; }

  double tau(const Vec& x, int m) const { return joint_ ? x(m) : tau_fixed_[static_cast<std::size_t>(m)]; }

  double objective(const Vec& x) const {
    if (slack_) {
      double s = 0.0;
      for (int n = 1; n <= k_; ++n) s += x(zeta_index(n)) + x(iota_index(n));
      return s;
    }
    double s = 0.0;
    for (int n = 1; n <= k_; ++n)
      for (int m = n + 1; m <= k_ + 1; ++m) {
        const int j = y_index(n, m);
        if (j < 0) continue;
        const double t = tau(x, m);
        s += x(j) * x(j) * x(j) / (t * t);
      }
    return s;
  }

  void objective_derivs(const Vec& x, Vec& g, Mat& h) const {
    g.setZero(n_var_);
    h.setZero(n_var_, n_var_);
    if (slack_) {
      for (int n = 1; n <= k_; ++n) g(zeta_index(n)) = g(iota_index(n)) = 1.0;
      return;
    }
    for (int n = 1; n <= k_; ++n)
      for (int m = n + 1; m <= k_ + 1; ++m) {
        const int j = y_index(n, m);
        if (j < 0) continue;
        const double y = x(j);
        const double t = tau(x, m);
        const double t2 = t * t;
        g(j) += 3.0 * y * y / t2;
        h(j, j) += 6.0 * y / t2;
        if (joint_) {
          const int i = tau_index(m);
          g(i) += -2.0 * y * y * y / (t2 * t);
          h(i, i) += 6.0 * y * y * y / (t2 * t2);
          h(i, j) += -6.0 * y * y / (t2 * t);
          h(j, i) += -6.0 * y * y / (t2 * t);
        }
      }
  }

  void constraint_values(const Vec& x, Vec& c) const {
    c.setZero(n_con_);
    if (joint_) {
      double prefix = 0.0;
      for (int n = 1; n <= k_; ++n) {
        prefix += x(tau_index(n - 1));
        const double t = x(tau_index(n));
        double v = demand_[static_cast<std::size_t>(n - 1)] / (t * t) - prefix;
        if (slack_) v -= x(zeta_index(n));
        c(causality_row(n)) = v;
      }
      double total = 0.0;
      for (int m = 0; m <= k_ + 1; ++m) total += x(tau_index(m));
      c(deadline_row()) = total - 1.0;
    }
    for (int m = 2; m <= k_ + 1; ++m) {
      const int r = capacity_row(m);
      if (r < 0) continue;
      double v = -phi_ * tau(x, m);
      for (int n = 1; n < m; ++n) v += x(y_index(n, m));
      c(r) = v;
    }
    for (int n = 1; n <= k_; ++n) {
      double v = work_[static_cast<std::size_t>(n - 1)];
      for (int m = n + 1; m <= k_ + 1; ++m) {
        const int j = y_index(n, m);
        if (j >= 0) v -= x(j);
      }
      if (slack_) v -= x(iota_index(n));
      c(completion_row(n)) = v;
    }
  }

  void constraint_jacobian(const Vec& x, Mat& jac) const {
    jac.setZero(n_con_, n_var_);
    if (joint_) {
      for (int n = 1; n <= k_; ++n) {
        const int r = causality_row(n);
        const double t = x(tau_index(n));
        jac(r, tau_index(n)) = -2.0 * demand_[static_cast<std::size_t>(n - 1)] / (t * t * t);
        for (int i = 0; i < n; ++i) jac(r, tau_index(i)) = -1.0;
        if (slack_) jac(r, zeta_index(n)) = -1.0;
      }
      for (int m = 0; m <= k_ + 1; ++m) jac(deadline_row(), tau_index(m)) = 1.0;
    }
    for (int m = 2; m <= k_ + 1; ++m) {
      const int r = capacity_row(m);
      if (r < 0) continue;
      if (joint_) jac(r, tau_index(m)) = -phi_;
      for (int n = 1; n < m; ++n) jac(r, y_index(n, m)) = 1.0;
    }
    for (int n = 1; n <= k_; ++n) {
      const int r = completion_row(n);
      for (int m = n + 1; m <= k_ + 1; ++m) {
        const int j = y_index(n, m);
        if (j >= 0) jac(r, j) = -1.0;
      }
      if (slack_) jac(r, iota_index(n)) = -1.0;
    }
  }

  void add_constraint_hessians(const Vec& x, const Vec& w, Mat& h) const {
    if (!joint_) return;
    for (int n = 1; n <= k_; ++n) {
      const double t = x(tau_index(n));
      h(tau_index(n), tau_index(n)) +=
          w(causality_row(n)) * 6.0 * demand_[static_cast<std::size_t>(n - 1)] / (t * t * t * t);
    }
  }

  /// A point with every variable positive, used to seed phase I.
  Vec initial_point() const {
    Vec x = Vec::Zero(n_var_);
    const double share = 1.0 / (k_ + 3);
    if (joint_)
      for (int m = 0; m <= k_ + 1; ++m) x(tau_index(m)) = share;
    for (int n = 1; n <= k_; ++n)
      for (int m = n + 1; m <= k_ + 1; ++m) {
        const int j = y_index(n, m);
        if (j >= 0) x(j) = 1e-3 * phi_ * tau(x, m) / k_;
      }
    if (slack_) {
      Vec c(n_con_);
      constraint_values(x, c);
      for (int n = 1; n <= k_; ++n) {
        x(zeta_index(n)) = std::max(c(causality_row(n)), 0.0) + 1.0;
        x(iota_index(n)) = std::max(c(completion_row(n)), 0.0) + 1.0;
      }
    }
    return x;
  }

 private:
  void build() {
    y_idx_.assign(static_cast<std::size_t>(k_ * (k_ + 2)), -1);
    cap_row_.assign(static_cast<std::size_t>(k_ + 2), -1);
    int v = joint_ ? k_ + 2 : 0;
    for (int n = 1; n <= k_; ++n)
      for (int m = n + 1; m <= k_ + 1; ++m) {
        if (!joint_ && !(tau_fixed_[static_cast<std::size_t>(m)] > 0.0)) continue;
        y_idx_[static_cast<std::size_t>((n - 1) * (k_ + 2) + m)] = v++;
      }
    slack0_ = v;
    if (slack_) v += 2 * k_;
    n_var_ = v;
    int r = joint_ ? k_ : 0;
    for (int m = 2; m <= k_ + 1; ++m) {
      if (!joint_ && !(tau_fixed_[static_cast<std::size_t>(m)] > 0.0)) continue;
      cap_row_[static_cast<std::size_t>(m)] = r++;
    }
    comp0_ = r;
    r += k_;
    if (joint_) r += 1;
    n_con_ = r;
  }

  int k_ = 0;
  std::vector<double> work_;
  std::vector<double> demand_;
  std::vector<double> tau_fixed_;
  double phi_ = 0.0;
  bool joint_ = false;
  bool slack_ = false;
  std::vector<int> y_idx_;
  std::vector<int> cap_row_;
  int slack0_ = 0;
  int comp0_ = 0;
  int n_var_ = 0;
  int n_con_ = 0;
};

namespace detail {

inline ConvexSolution run_barrier(const ScaledProgram& prog, const Vec& start, double tol) {
  BarrierOptions opt;
  opt.gap_tol = tol;
  opt.objective_floor = prog.has_slack() ? 1.0 : 0.0;
  BarrierResult b = barrier_solve(prog, start, opt);
  ConvexSolution s;
  s.point = b.x;
  s.objective = b.objective;
  s.duals = b.lambda;
  s.iterations = b.newton_steps;
  s.converged = b.converged;
  s.kkt_residual = kkt_residual(prog, b.x, b.lambda);
  return s;
}

inline double max_positive(std::span<const double> v) {
  double m = 0.0;
  for (double x : v) m = std::max(m, x);
  return m;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Frequency problem with fixed durations

struct FreqOracleSolution {
  ConvexSolution solution;
  FrequencyPlan plan;
  FreqDuals duals;
  double energy = 0.0;
};

/// Interior-point solve of the fixed-duration frequency problem.
inline FreqOracleSolution solve_freq_oracle(std::span<const double> cycles, const TimeAllocation& dt, double f_max,
                                            double kappa, double tol = 1e-10) {
  const int k = static_cast<int>(cycles.size());
  if (dt.num_devices() != k) throw DomainError("solve_freq_oracle: size mismatch");
  FreqOracleSolution out;
  out.plan = FrequencyPlan(k);
  out.duals.alpha.assign(static_cast<std::size_t>(k) + 2, 0.0);
  out.duals.beta.assign(static_cast<std::size_t>(k), 0.0);
  const double fs = detail::max_positive(cycles);
  if (!(fs > 0.0)) {
    out.solution.converged = true;
    return out;
  }
  const double req = required_fmax(cycles, dt);
  if (f_max < req) {
    std::ostringstream msg;
    msg << "frequency problem infeasible: F_max=" << f_max << " Hz below required " << req << " Hz";
    throw InfeasibleError(msg.str());
  }
  const double horizon = dt.span(2, k + 1);
  std::vector<double> work(static_cast<std::size_t>(k));
  for (int n = 0; n < k; ++n) work[static_cast<std::size_t>(n)] = cycles[static_cast<std::size_t>(n)] / fs;
  std::vector<double> tau(dt.dt.size());
  for (std::size_t m = 0; m < tau.size(); ++m) tau[m] = dt.dt[m] / horizon;
  const double phi = f_max * horizon / fs;
  const ScaledProgram prog = ScaledProgram::fixed_times(work, tau, phi);

  Vec start;
  if (!find_interior_point(prog, prog.initial_point(), start))
    throw InfeasibleError("frequency problem has no strictly feasible point at F_max = required capacity");
  out.solution = detail::run_barrier(prog, start, tol);
  if (!out.solution.converged) throw NonConvergenceError("frequency oracle did not reach its gap tolerance");

  const double eref = kappa * fs * fs * fs / (horizon * horizon);
  const Vec& x = out.solution.point;
  for (int n = 1; n <= k; ++n)
    for (int m = n + 1; m <= k + 1; ++m) {
      const int j = prog.y_index(n, m);
      if (j >= 0) out.plan(n, m) = fs * x(j) / dt[m];
    }
  for (int n = 1; n <= k; ++n)
    out.duals.beta[static_cast<std::size_t>(n - 1)] = eref * out.solution.duals(prog.completion_row(n)) / fs;
  for (int m = 2; m <= k + 1; ++m) {
    const int r = prog.capacity_row(m);
    if (r >= 0) out.duals.alpha[static_cast<std::size_t>(m)] = eref * out.solution.duals(r) / fs * dt[m];
  }
  out.energy = eval_energy(out.plan, dt, kappa);
  return out;
}

// ---------------------------------------------------------------------------
// Joint durations and computation for a fixed schedule

/// Multipliers of the joint problem, SI units.
///   rho[n-1]   causality of the device in slot n, energy form
///              (lambda A^3/(h dt_n^2) - sum_{i<n} dt_i h eta P0 <= 0)
///   beta[n-1]  completion of the n-th task (cycles)
///   omega[m]   capacity of slot m in cycle form (sum_n x_{n,m} - F_max dt_m <= 0)
///   xi         total duration
struct PrimalDuals {
  std::vector<double> rho;
  std::vector<double> beta;
  std::vector<double> omega;
  double xi = 0.0;
};

struct PrimalSolution {
  Schedule schedule;
  TimeAllocation dt;
  ComputationPlan x;
  FrequencyPlan f;
  double energy = 0.0;
  PrimalDuals duals;
  double kkt_residual = 0.0;
  bool converged = false;
  bool used_fallback = false;
  int iterations = 0;
};

namespace detail {

struct JointScaling {
  double fs = 1.0;
  double horizon = 1.0;
  double eref = 1.0;
  double phi = 1.0;
  std::vector<double> work;
  std::vector<double> demand;
};

inline JointScaling joint_scaling(const Scenario& sc, const Schedule& sched) {
  const int k = sc.num_devices();
  JointScaling s;
  s.horizon = sc.deadline_s;
  s.fs = 0.0;
  for (const auto& t : sc.tasks) s.fs = std::max(s.fs, t.cycles());
  s.eref = sc.params.server_energy_coef * s.fs * s.fs * s.fs / (s.horizon * s.horizon);
  s.phi = sc.f_max_hz * s.horizon / s.fs;
  s.work.resize(static_cast<std::size_t>(k));
  s.demand.resize(static_cast<std::size_t>(k));
  const double t3 = s.horizon * s.horizon * s.horizon;
  for (int n = 1; n <= k; ++n) {
    const int dev = sched.device_at(n);
    s.work[static_cast<std::size_t>(n - 1)] = sc.tasks[static_cast<std::size_t>(dev)].cycles() / s.fs;
    s.demand[static_cast<std::size_t>(n - 1)] = sc.causality_demand(dev) / t3;
  }
  return s;
}

inline PrimalSolution decode_joint(const Scenario& sc, const Schedule& sched, const ScaledProgram& prog,
                                   const JointScaling& s, const ConvexSolution& cs) {
  const int k = sc.num_devices();
  const double hp = sc.params.harvest_power();
  PrimalSolution p;
  p.schedule = sched;
  p.dt = TimeAllocation::zeros(k);
  for (int m = 0; m <= k + 1; ++m) p.dt[m] = s.horizon * cs.point(prog.tau_index(m));
  p.x = ComputationPlan(k);
  p.f = FrequencyPlan(k);
  for (int n = 1; n <= k; ++n)
    for (int m = n + 1; m <= k + 1; ++m) {
      p.x(n, m) = s.fs * cs.point(prog.y_index(n, m));
      p.f(n, m) = p.x(n, m) / p.dt[m];
    }
  p.energy = eval_energy(p.f, p.dt, sc.params.server_energy_coef);
  p.duals.rho.resize(static_cast<std::size_t>(k));
  p.duals.beta.resize(static_cast<std::size_t>(k));
  p.duals.omega.assign(static_cast<std::size_t>(k) + 2, 0.0);
  for (int n = 1; n <= k; ++n) {
    const double h = sc.tasks[static_cast<std::size_t>(sched.device_at(n))].channel_gain;
    p.duals.rho[static_cast<std::size_t>(n - 1)] = s.eref * cs.duals(prog.causality_row(n)) / (s.horizon * h * hp);
    p.duals.beta[static_cast<std::size_t>(n - 1)] = s.eref * cs.duals(prog.completion_row(n)) / s.fs;
  }
  for (int m = 2; m <= k + 1; ++m)
    p.duals.omega[static_cast<std::size_t>(m)] = s.eref * cs.duals(prog.capacity_row(m)) / s.fs;
  p.duals.xi = s.eref * cs.duals(prog.deadline_row()) / s.horizon;
  p.kkt_residual = cs.kkt_residual;
  p.converged = cs.converged;
  p.iterations = cs.iterations;
  return p;
}

/// Packs an SI primal/dual pair into the scaled program's point and multipliers.
inline std::pair<Vec, Vec> encode_joint(const Scenario& sc, const ScaledProgram& prog, const JointScaling& s,
                                        const PrimalSolution& p) {
  const int k = sc.num_devices();
  const double hp = sc.params.harvest_power();
  Vec x = Vec::Zero(prog.dim());
  Vec lam = Vec::Zero(prog.num_constraints());
  for (int m = 0; m <= k + 1; ++m) x(prog.tau_index(m)) = p.dt[m] / s.horizon;
  for (int n = 1; n <= k; ++n)
    for (int m = n + 1; m <= k + 1; ++m) x(prog.y_index(n, m)) = p.x(n, m) / s.fs;
  for (int n = 1; n <= k; ++n) {
    const double h = sc.tasks[static_cast<std::size_t>(p.schedule.device_at(n))].channel_gain;
    lam(prog.causality_row(n)) = p.duals.rho[static_cast<std::size_t>(n - 1)] * s.horizon * h * hp / s.eref;
    lam(prog.completion_row(n)) = p.duals.beta[static_cast<std::size_t>(n - 1)] * s.fs / s.eref;
  }
  for (int m = 2; m <= k + 1; ++m)
    lam(prog.capacity_row(m)) = p.duals.omega[static_cast<std::size_t>(m)] * s.fs / s.eref;
  lam(prog.deadline_row()) = p.duals.xi * s.horizon / s.eref;
  return {x, lam};
}

}  // namespace detail

/// KKT residual of an SI primal/dual pair for the joint problem, measured in
/// the scaled coordinates (cycles over max F, time over T, energy over
/// kappa (max F)^3 / T^2).
inline double kkt_residual(const Scenario& sc, const PrimalSolution& p) {
  const auto s = detail::joint_scaling(sc, p.schedule);
  const auto prog = ScaledProgram::joint(s.work, s.demand, s.phi, false);
  auto [x, lam] = detail::encode_joint(sc, prog, s, p);
  return kkt_residual(prog, x, lam);
}

/// Interior-point solve of the joint problem for one schedule.
inline PrimalSolution solve_primal_oracle(const Scenario& sc, const Schedule& sched, double tol = 1e-10) {
  if (sched.size() != sc.num_devices()) throw DomainError("solve_primal_oracle: schedule size mismatch");
  const auto s = detail::joint_scaling(sc, sched);
  const auto prog = ScaledProgram::joint(s.work, s.demand, s.phi, false);
  Vec start;
  if (!find_interior_point(prog, prog.initial_point(), start)) throw InfeasibleError("schedule is infeasible");
  const ConvexSolution cs = detail::run_barrier(prog, start, tol);
  if (!cs.converged) throw NonConvergenceError("primal oracle did not reach its gap tolerance");
  return detail::decode_joint(sc, sched, prog, s, cs);
}

/// l1 feasibility problem for one schedule, scaled units.
struct FeasibilitySolution {
  ConvexSolution solution;
  std::vector<double> rho;   // causality multipliers, scaled
  std::vector<double> beta;  // completion multipliers, scaled
  std::vector<double> zeta;
  std::vector<double> iota;
  double xi = 0.0;    // deadline multiplier, scaled
  TimeAllocation dt;  // seconds
  ComputationPlan x;  // cycles
  bool feasible = false;
};

inline FeasibilitySolution solve_feasibility(const Scenario& sc, const Schedule& sched, double tol = 1e-9) {
  const int k = sc.num_devices();
  if (sched.size() != k) throw DomainError("solve_feasibility: schedule size mismatch");
  const auto s = detail::joint_scaling(sc, sched);
  const auto prog = ScaledProgram::joint(s.work, s.demand, s.phi, true);
  FeasibilitySolution out;
  out.solution = detail::run_barrier(prog, prog.initial_point(), tol);
  if (!out.solution.converged) throw NonConvergenceError("feasibility problem did not reach its gap tolerance");
  const Vec& x = out.solution.point;
  out.dt = TimeAllocation::zeros(k);
  for (int m = 0; m <= k + 1; ++m) out.dt[m] = s.horizon * x(prog.tau_index(m));
  out.x = ComputationPlan(k);
  for (int n = 1; n <= k; ++n)
    for (int m = n + 1; m <= k + 1; ++m) out.x(n, m) = s.fs * x(prog.y_index(n, m));
  for (int n = 1; n <= k; ++n) {
    out.rho.push_back(out.solution.duals(prog.causality_row(n)));
    out.beta.push_back(out.solution.duals(prog.completion_row(n)));
    out.zeta.push_back(x(prog.zeta_index(n)));
    out.iota.push_back(x(prog.iota_index(n)));
  }
  out.xi = out.solution.duals(prog.deadline_row());
  out.feasible = out.solution.objective <= 1e-7;
  return out;
}

}  // namespace amec

#endif  // AMEC_CONVEX_ORACLE_HPP
