#ifndef AMEC_GBD_HPP
#define AMEC_GBD_HPP

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <set>
#include <optional>
#include <string>
#include <vector>

#include "amec/convex_oracle.hpp"
#include "amec/error.hpp"
#include "amec/master.hpp"
#include "amec/scenario.hpp"
#include "amec/time_alloc.hpp"

namespace amec {

/// Optimality cut of a solved schedule (J). Duals are re-indexed by device.
inline AffineCut build_optimality_cut(const PrimalSolution& sol, const Scenario& sc, int iteration = 0) {
  const int k = sc.num_devices();
  if (static_cast<int>(sol.duals.rho.size()) != k || static_cast<int>(sol.duals.beta.size()) != k)
    throw DomainError("build_optimality_cut: solution carries no duals");
  const auto& p = sc.params;
  const double hp = p.harvest_power();
  AffineCut cut = AffineCut::zero(CutKind::Optimality, k);
  cut.source_iteration = iteration;
  cut.constant = sol.energy;
  std::vector<double> row_work(static_cast<std::size_t>(k), 0.0);
  for (int n = 1; n <= k; ++n)
    for (int m = n + 1; m <= k + 1; ++m) row_work[static_cast<std::size_t>(n - 1)] += sol.x(n, m);
  for (int slot = 1; slot <= k; ++slot) {
    const int dev = sol.schedule.device_at(slot);
    const double rho = sol.duals.rho[static_cast<std::size_t>(slot - 1)];
    const double beta = sol.duals.beta[static_cast<std::size_t>(slot - 1)];
    const auto& t = sc.tasks[static_cast<std::size_t>(dev)];
    cut.constant += beta * t.cycles();
    for (int n = 1; n <= k; ++n) {
      const double spend = p.tx_energy_coef * std::pow(t.data_bits, 3) / (t.channel_gain * sol.dt[n] * sol.dt[n]);
      const double harvest = sol.dt.span(0, n - 1) * t.channel_gain * hp;
      cut.coeff[static_cast<std::size_t>(dev)][static_cast<std::size_t>(n - 1)] =
          rho * (spend - harvest) - beta * row_work[static_cast<std::size_t>(n - 1)];
    }
  }
  return cut;
}

/// Feasibility cut from the slack problem, in its scaled units.
inline AffineCut build_feasibility_cut(const FeasibilitySolution& fs, const Scenario& sc, const Schedule& sched,
                                       int iteration = 0) {
  const int k = sc.num_devices();
  const auto s = detail::joint_scaling(sc, sched);
  AffineCut cut = AffineCut::zero(CutKind::Feasibility, k);
  cut.source_iteration = iteration;
  const double t3 = s.horizon * s.horizon * s.horizon;
  std::vector<double> tau(static_cast<std::size_t>(k) + 2);
  for (int m = 0; m <= k + 1; ++m) tau[static_cast<std::size_t>(m)] = fs.dt[m] / s.horizon;
  std::vector<double> row_work(static_cast<std::size_t>(k), 0.0);
  for (int n = 1; n <= k; ++n)
    for (int m = n + 1; m <= k + 1; ++m) row_work[static_cast<std::size_t>(n - 1)] += fs.x(n, m) / s.fs;
  for (int slot = 1; slot <= k; ++slot) {
    const int dev = sched.device_at(slot);
    const double rho = fs.rho[static_cast<std::size_t>(slot - 1)];
    const double beta = fs.beta[static_cast<std::size_t>(slot - 1)];
    const double demand = sc.causality_demand(dev) / t3;
    cut.constant += beta * sc.tasks[static_cast<std::size_t>(dev)].cycles() / s.fs;
    double prefix = 0.0;
    for (int n = 1; n <= k; ++n) {
      prefix += tau[static_cast<std::size_t>(n - 1)];
      const double t = tau[static_cast<std::size_t>(n)];
      cut.coeff[static_cast<std::size_t>(dev)][static_cast<std::size_t>(n - 1)] =
          rho * (demand / (t * t) - prefix) - beta * row_work[static_cast<std::size_t>(n - 1)];
    }
  }
  return cut;
}

/// Schedule-dependent pieces of a Lagrangian whose multipliers come from a
/// solved schedule, in SI units.
///
/// Slot n of the source holds rho_bar[n-1] = rho h (causality multiplier times
/// the gain of the device there). A device d placed in row n contributes
/// row_value(d, n) plus, for every later slot m, -gain_row(n, m) dt_m.
struct DualCutParts {
  std::vector<double> rho_bar;
  std::vector<double> slot_base;  // dt_m coefficient independent of the schedule
  double constant = 0.0;
  double tail_curvature = 0.0;    // schedule-independent a / dt^2 on slot K+1
  std::function<double(int, int)> row_value;
  std::function<double(int, int)> gain_row;
};

/// Cut with each multiplier following the device it belonged to.
inline LagrangianCut build_device_cut(const DualCutParts& parts, const Scenario& sc, const Schedule& source,
                                      int iteration) {
  const int k = sc.num_devices();
  const auto uk = static_cast<std::size_t>(k);
  const auto& p = sc.params;
  const double hp = p.harvest_power();
  LagrangianCut cut;
  cut.kind = CutKind::Optimality;
  cut.source_iteration = iteration;
  cut.horizon = sc.deadline_s;
  cut.constant = parts.constant;
  cut.tail_curvature = parts.tail_curvature;
  cut.slot_base = parts.slot_base;
  cut.curvature.assign(uk, 0.0);
  cut.harvest.assign(uk, 0.0);
  cut.gain.assign(uk, std::vector<double>(uk + 2, 0.0));
  for (int n = 1; n <= k; ++n) {
    const int d = source.device_at(n);
    const auto ud = static_cast<std::size_t>(d);
    const auto& t = sc.tasks[ud];
    const double rb = parts.rho_bar[static_cast<std::size_t>(n - 1)];
    cut.curvature[ud] = rb * p.tx_energy_coef * std::pow(t.data_bits, 3) / (t.channel_gain * t.channel_gain);
    cut.harvest[ud] = rb * hp;
    cut.constant += parts.row_value(d, n);
    for (int m = 2; m <= k + 1; ++m) cut.gain[ud][static_cast<std::size_t>(m)] = parts.gain_row(n, m);
  }
  return cut;
}

/// Cut with each multiplier kept on its slot; affine in the assignment.
inline AffineCut build_slot_cut(const DualCutParts& parts, const Scenario& sc, int iteration) {
  const int k = sc.num_devices();
  const auto& p = sc.params;
  const double hp = p.harvest_power();
  LagrangianCut shape;
  shape.horizon = sc.deadline_s;
  auto slot_b = [&](int i) {
    double b = parts.slot_base[static_cast<std::size_t>(i)];
    for (int n = i + 1; n <= k; ++n) b -= parts.rho_bar[static_cast<std::size_t>(n - 1)] * hp;
    for (int n = 1; n < i && n <= k; ++n) b -= parts.gain_row(n, i);
    return b;
  };
  AffineCut cut = AffineCut::zero(CutKind::Optimality, k);
  cut.source_iteration = iteration;
  cut.constant = parts.constant + shape.slot_term(0.0, slot_b(0)) + shape.slot_term(parts.tail_curvature, slot_b(k + 1));
  for (int n = 1; n <= k; ++n) {
    const double b = slot_b(n);
    const double rb = parts.rho_bar[static_cast<std::size_t>(n - 1)];
    for (int d = 0; d < k; ++d) {
      const auto& t = sc.tasks[static_cast<std::size_t>(d)];
      const double a = rb * p.tx_energy_coef * std::pow(t.data_bits, 3) / (t.channel_gain * t.channel_gain);
      cut.coeff[static_cast<std::size_t>(d)][static_cast<std::size_t>(n - 1)] = parts.row_value(d, n) + shape.slot_term(a, b);
    }
  }
  return cut;
}

namespace detail {

inline std::vector<double> clamped(const std::vector<double>& v, std::size_t size) {
  std::vector<double> out(size, 0.0);
  for (std::size_t i = 0; i < size && i < v.size(); ++i) out[i] = std::max(v[i], 0.0);
  return out;
}

inline std::vector<double> rho_bar(const PrimalSolution& sol, const Scenario& sc) {
  const int k = sc.num_devices();
  if (static_cast<int>(sol.duals.rho.size()) != k) throw DomainError("optimality cut: solution carries no duals");
  std::vector<double> rb(static_cast<std::size_t>(k));
  for (int n = 1; n <= k; ++n)
    rb[static_cast<std::size_t>(n - 1)] = std::max(sol.duals.rho[static_cast<std::size_t>(n - 1)], 0.0) *
                                          sc.tasks[static_cast<std::size_t>(sol.schedule.device_at(n))].channel_gain;
  return rb;
}

/// Lagrangian pieces of the full scheme. Computation is minimised in closed
/// form: min_x kappa x^3/dt^2 - c x = -(2/3) c^{3/2} dt / sqrt(3 kappa).
inline DualCutParts proposed_parts(const PrimalSolution& sol, const Scenario& sc) {
  const int k = sc.num_devices();
  const auto uk = static_cast<std::size_t>(k);
  if (static_cast<int>(sol.duals.beta.size()) != k) throw DomainError("optimality cut: solution carries no duals");
  const double xi = std::max(sol.duals.xi, 0.0);
  const auto omega = clamped(sol.duals.omega, uk + 2);
  const auto beta = clamped(sol.duals.beta, uk);
  const double root = std::sqrt(3.0 * sc.params.server_energy_coef);
  DualCutParts parts;
  parts.rho_bar = rho_bar(sol, sc);
  parts.constant = -xi * sc.deadline_s;
  parts.slot_base.assign(uk + 2, xi);
  for (std::size_t m = 0; m < uk + 2; ++m) parts.slot_base[m] -= sc.f_max_hz * omega[m];
  parts.row_value = [&sc, beta](int d, int n) {
    return beta[static_cast<std::size_t>(n - 1)] * sc.tasks[static_cast<std::size_t>(d)].cycles();
  };
  parts.gain_row = [beta, omega, root](int n, int m) {
    const double c = std::max(beta[static_cast<std::size_t>(n - 1)] - omega[static_cast<std::size_t>(m)], 0.0);
    return 2.0 / 3.0 * c * std::sqrt(c) / root;
  };
  return parts;
}

}  // namespace detail

/// Dual-function optimality cut: the Lagrangian of the solved schedule's
/// multipliers, minimised over durations and computation with only
/// non-negativity and dt <= T kept. Multipliers follow their devices.
inline LagrangianCut build_dual_optimality_cut(const PrimalSolution& sol, const Scenario& sc, int iteration = 0) {
  return build_device_cut(detail::proposed_parts(sol, sc), sc, sol.schedule, iteration);
}

/// As build_dual_optimality_cut with the multipliers left on their slots.
inline AffineCut build_slot_optimality_cut(const PrimalSolution& sol, const Scenario& sc, int iteration = 0) {
  return build_slot_cut(detail::proposed_parts(sol, sc), sc, iteration);
}

/// Dual-function feasibility cut of the slack problem, in its scaled units.
/// Non-positive at every feasible schedule.
inline LagrangianCut build_dual_feasibility_cut(const FeasibilitySolution& fs, const Scenario& sc,
                                                const Schedule& sched, int iteration = 0) {
  const int k = sc.num_devices();
  const auto uk = static_cast<std::size_t>(k);
  const auto s = detail::joint_scaling(sc, sched);
  const double t3 = s.horizon * s.horizon * s.horizon;
  const double xi = std::max(fs.xi, 0.0);
  LagrangianCut cut;
  cut.kind = CutKind::Feasibility;
  cut.source_iteration = iteration;
  cut.horizon = 1.0;
  cut.max_combine = true;
  cut.constant = -xi;
  cut.curvature.assign(uk, 0.0);
  cut.harvest.assign(uk, 0.0);
  cut.gain.assign(uk, std::vector<double>(uk + 2, 0.0));
  cut.slot_base.assign(uk + 2, xi);
  for (int slot = 1; slot <= k; ++slot) {
    const auto dev = static_cast<std::size_t>(sched.device_at(slot));
    const double rho = std::clamp(fs.rho[static_cast<std::size_t>(slot - 1)], 0.0, 1.0);
    const double beta = std::clamp(fs.beta[static_cast<std::size_t>(slot - 1)], 0.0, 1.0);
    cut.constant += beta * sc.tasks[dev].cycles() / s.fs;
    cut.curvature[dev] = rho * sc.causality_demand(static_cast<int>(dev)) / t3;
    cut.harvest[dev] = rho;
    for (std::size_t m = 2; m < uk + 2; ++m) cut.gain[dev][m] = s.phi * beta;
  }
  return cut;
}

/// Excludes exactly one schedule: sum_n a_{pi_n,n} - K + 1/2 <= 0.
inline AffineCut build_no_good_cut(const Schedule& sched, int iteration = 0) {
  const int k = sched.size();
  AffineCut cut = AffineCut::zero(CutKind::Feasibility, k);
  cut.source_iteration = iteration;
  cut.constant = -(k - 0.5);
  for (int n = 1; n <= k; ++n) cut.coeff[static_cast<std::size_t>(sched.device_at(n))][static_cast<std::size_t>(n - 1)] = 1.0;
  return cut;
}

/// DualFunction minimises the Lagrangian over the continuous variables;
/// FixedPoint freezes them at the source solution and yields an affine cut.
enum class CutForm { DualFunction, SlotDual, DeviceDual, FixedPoint };

enum class GbdStatus { Converged, Stalled, IterationLimit };

inline std::string to_string(GbdStatus s) {
  switch (s) {
    case GbdStatus::Converged: return "converged";
    case GbdStatus::Stalled: return "stalled";
    case GbdStatus::IterationLimit: return "iteration_limit";
  }
  return "?";
}

struct GbdTraceRow {
  int iteration = 0;
  double ub = 0.0;
  double lb = 0.0;
  CutKind cut = CutKind::Optimality;
  Schedule schedule;
  long master_nodes = 0;
};

struct GbdOptions {
  double gap = 1e-4;  // relative: ub - lb <= gap * |ub|
  int max_iter = 200;
  MasterOptions master;
  BcdOptions primal;
  double feasibility_tol = 1e-7;  // slack objective at or below this counts as feasible
  CutForm cut_form = CutForm::DualFunction;
  int exact_master_max_k = 8;  // larger K uses the local-search master
  std::optional<Schedule> initial;  // identity when unset
  int polish_passes = 10;           // pairwise-swap descent on the incumbent after a heuristic run
};

struct GbdState {
  double ub = std::numeric_limits<double>::infinity();
  double lb = 0.0;
  std::optional<PrimalSolution> incumbent;
  int iteration = 0;
  std::vector<GbdTraceRow> trace;
  CutLedger ledger;
};

struct SolveReport {
  GbdStatus status = GbdStatus::Converged;
  PrimalSolution solution;
  double energy = 0.0;
  double ub = 0.0;
  double lb = 0.0;
  int iterations = 0;
  int primal_solves = 0;
  int fallback_solves = 0;
  std::vector<GbdTraceRow> trace;
  std::size_t optimality_cuts = 0;
  std::size_t feasibility_cuts = 0;
};

/// Thrown when the master problem excludes every schedule before any was feasible.
class AllSchedulesInfeasible : public InfeasibleError {
 public:
  using InfeasibleError::InfeasibleError;
};

/// One primal solve: the solution and the optimality cuts it yields.
struct PrimalStep {
  PrimalSolution solution;
  std::vector<Cut> cuts;
};

/// Cut excluding an infeasible schedule: the dual feasibility cut when it
/// separates, otherwise a no-good cut.
inline Cut exclusion_cut(const Scenario& sc, const Schedule& sched, const GbdOptions& opt, int iteration) {
  try {
    const FeasibilitySolution fs = solve_feasibility(sc, sched);
    if (fs.solution.objective > opt.feasibility_tol) {
      Cut cut = opt.cut_form == CutForm::FixedPoint ? Cut(build_feasibility_cut(fs, sc, sched, iteration))
                                                    : Cut(build_dual_feasibility_cut(fs, sc, sched, iteration));
      if (cut.eval(sched) > opt.master.feasibility_tol) return cut;
    }
  } catch (const NonConvergenceError&) {
  }
  return build_no_good_cut(sched, iteration);
}

/// Per-schedule problem of the full scheme.
class ProposedPrimal {
 public:
  ProposedPrimal(const Scenario& sc, const GbdOptions& opt) : sc_(sc), opt_(opt) {}

  PrimalStep solve(const Schedule& sched, int iteration) const {
    PrimalStep step{solve_primal_bcd(sc_, sched, opt_.primal), {}};
    const auto& sol = step.solution;
    if (opt_.cut_form == CutForm::FixedPoint) {
      step.cuts.emplace_back(build_optimality_cut(sol, sc_, iteration));
    } else {
      if (opt_.cut_form != CutForm::SlotDual) step.cuts.emplace_back(build_dual_optimality_cut(sol, sc_, iteration));
      if (opt_.cut_form != CutForm::DeviceDual) step.cuts.emplace_back(build_slot_optimality_cut(sol, sc_, iteration));
    }
    return step;
  }

  Cut exclude(const Schedule& sched, int iteration) const { return exclusion_cut(sc_, sched, opt_, iteration); }

 private:
  const Scenario& sc_;
  const GbdOptions& opt_;
};

/// First-improvement descent over pairwise swaps of the incumbent order,
/// scored by true primal energies. Only used when the master is heuristic.
template <class Primal>
void polish_incumbent(const Scenario& sc, const Primal& primal, const GbdOptions& opt, GbdState& st, SolveReport& rep) {
  const int k = sc.num_devices();
  for (int pass = 0; pass < opt.polish_passes; ++pass) {
    bool improved = false;
    for (int a = 0; a < k && !improved; ++a)
      for (int b = a + 1; b < k && !improved; ++b) {
        std::vector<int> order = st.incumbent->schedule.order();
        std::swap(order[static_cast<std::size_t>(a)], order[static_cast<std::size_t>(b)]);
        try {
          PrimalStep step = primal.solve(Schedule(order), st.iteration);
          ++rep.primal_solves;
          if (step.solution.energy < st.ub * (1.0 - 1e-9)) {
            st.ub = step.solution.energy;
            st.incumbent = std::move(step.solution);
            improved = true;
          }
        } catch (const InfeasibleError&) {
        } catch (const NonConvergenceError&) {
        }
      }
    if (!improved) break;
  }
}

/// Alternates per-schedule primal solves with the master problem until the
/// bounds meet, starting from the identity order.
template <class Primal>
SolveReport run_gbd_with(const Scenario& sc, const Primal& primal, const GbdOptions& opt) {
  sc.validate();
  const int k = sc.num_devices();
  GbdState st;
  std::set<Schedule> visited;
  Schedule current = opt.initial ? *opt.initial : Schedule::identity(k);
  SolveReport rep;
  rep.status = GbdStatus::IterationLimit;
  bool certified = true;
  const bool heuristic = k > opt.exact_master_max_k;
  MasterOptions mopt = opt.master;
  if (heuristic) mopt.method = MasterMethod::LocalSearch;

  for (st.iteration = 1; st.iteration <= opt.max_iter; ++st.iteration) {
    if (visited.count(current)) {
      rep.status = GbdStatus::Stalled;
      --st.iteration;
      break;
    }
    CutKind kind = CutKind::Optimality;
    try {
      PrimalStep step = primal.solve(current, st.iteration);
      ++rep.primal_solves;
      if (step.solution.used_fallback) ++rep.fallback_solves;
      for (auto& c : step.cuts) st.ledger.add(std::move(c));
      if (step.solution.energy < st.ub) {
        st.ub = step.solution.energy;
        st.incumbent = std::move(step.solution);
      }
    } catch (const InfeasibleError&) {
      kind = CutKind::Feasibility;
      st.ledger.add(primal.exclude(current, st.iteration));
    } catch (const NonConvergenceError&) {
      kind = CutKind::Feasibility;
      st.ledger.add(build_no_good_cut(current, st.iteration));
      certified = false;
    }
    visited.insert(current);

    MasterSolution ms;
    bool exhausted = false;
    bool budget_out = false;
    try {
      if (heuristic) {
        std::vector<Schedule> starts;
        if (st.incumbent) starts.push_back(st.incumbent->schedule);
        starts.push_back(current);
        ms = local_search_master(st.ledger, k, mopt, starts, &visited);
      } else {
        std::optional<Schedule> hint;
        if (st.incumbent) hint = st.incumbent->schedule;
        ms = solve_master(st.ledger, k, mopt, hint, &visited);
      }
    } catch (const InfeasibleError&) {
      exhausted = true;
    } catch (const NonConvergenceError&) {
      budget_out = true;
    }
    // Visited schedules are excluded from the master, so the certified
    // bound is min(ub, psi).
    if (!exhausted && !budget_out && ms.complete && certified) st.lb = std::max(st.lb, std::min(st.ub, ms.psi));
    if (exhausted && certified && st.incumbent) st.lb = st.ub;
    st.trace.push_back({st.iteration, st.ub, st.lb, kind, current, exhausted || budget_out ? 0 : ms.nodes_explored});
    if (exhausted) {
      rep.status = certified ? GbdStatus::Converged : GbdStatus::Stalled;
      break;
    }
    if (budget_out) {
      rep.status = GbdStatus::Stalled;
      break;
    }
    if (st.incumbent && st.ub - st.lb <= opt.gap * std::fabs(st.ub)) {
      rep.status = GbdStatus::Converged;
      break;
    }
    if (heuristic && st.incumbent && ms.psi >= st.ub * (1.0 - opt.gap)) {
      rep.status = GbdStatus::Stalled;
      break;
    }
    current = ms.schedule;
  }
  if (!st.incumbent) throw AllSchedulesInfeasible("no feasible schedule found");
  if (heuristic) polish_incumbent(sc, primal, opt, st, rep);
  rep.iterations = std::min(st.iteration, opt.max_iter);
  rep.solution = *st.incumbent;
  rep.energy = st.incumbent->energy;
  rep.ub = st.ub;
  rep.lb = st.lb;
  rep.trace = std::move(st.trace);
  rep.optimality_cuts = st.ledger.count(CutKind::Optimality);
  rep.feasibility_cuts = st.ledger.count(CutKind::Feasibility);
  return rep;
}

inline SolveReport run_gbd(const Scenario& sc, const GbdOptions& opt = {}) {
  return run_gbd_with(sc, ProposedPrimal(sc, opt), opt);
}

}  // namespace amec

#endif  // AMEC_GBD_HPP
