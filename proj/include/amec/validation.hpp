#ifndef AMEC_VALIDATION_HPP
#define AMEC_VALIDATION_HPP

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "amec/baselines.hpp"
#include "amec/convex_oracle.hpp"
#include "amec/freq_alloc.hpp"
#include "amec/gbd.hpp"
#include "amec/rng.hpp"
#include "amec/scenario.hpp"

namespace amec {

struct ValidateOptions {
  int instances = 200;
  int max_devices = 6;
  int scheme_every = 10;       // run the scheme and bound checks on every n-th instance
  int scheme_max_devices = 5;  // those instances cycle K over 3..this
  bool perturb_duals = false;  // negative control: corrupt the completion prices
  double rel_tol = 1e-4;
};

struct ValidationFailure {
  int instance = 0;
  std::string check;
  std::string detail;
  Scenario scenario;
};

struct ValidationReport {
  int instances = 0;
  int checks = 0;
  std::vector<ValidationFailure> failures;
  bool passed() const { return failures.empty(); }
};

/// Slot durations for the frequency checks of one instance, drawn from its seed.
inline TimeAllocation validation_durations(const Scenario& sc) {
  Rng rng(stream_seed(sc.seed, 0x56414c44ULL));
  const int k = sc.num_devices();
  TimeAllocation dt = TimeAllocation::zeros(k);
  double total = 0.0;
  for (int i = 0; i <= k + 1; ++i) total += (dt[i] = rng.uniform(0.05, 1.0));
  for (int i = 0; i <= k + 1; ++i) dt[i] *= sc.deadline_s / total;
  return dt;
}

/// Capacity for the frequency checks: the feasibility threshold times a factor in [0.9, 2].
inline double validation_fmax(const Scenario& sc, const TimeAllocation& dt) {
  Rng rng(stream_seed(sc.seed, 0x464d4158ULL));
  const auto cycles = [&] {
    std::vector<double> c;
    for (const auto& t : sc.tasks) c.push_back(t.cycles());
    return c;
  }();
  return required_fmax(cycles, dt) * rng.uniform(0.9, 2.0);
}

namespace detail {

struct Checker {
  ValidationReport& report;
  int instance;
  const Scenario& sc;

  void expect(bool ok, const std::string& check, const std::string& detail = {}) {
    ++report.checks;
    if (!ok) report.failures.push_back({instance, check, detail, sc});
  }
};

inline void check_frequency(Checker& c, const Scenario& sc, const ValidateOptions& opt) {
  std::vector<double> cycles;
  for (const auto& t : sc.tasks) cycles.push_back(t.cycles());
  const TimeAllocation dt = validation_durations(sc);
  const double f_max = validation_fmax(sc, dt);
  const double kappa = sc.params.server_energy_coef;
  const bool feasible = f_max >= required_fmax(cycles, dt);

  std::optional<FreqAllocResult> alg;
  try {
    alg = allocate_frequencies(cycles, dt, f_max, kappa);
  } catch (const InfeasibleError&) {
  }
  c.expect(alg.has_value() == feasible, "feasibility", feasible ? "feasible instance rejected" : "infeasible instance accepted");
  if (!alg) return;

  FrequencyPlan plan = alg->plan;
  double energy = alg->energy;
  if (opt.perturb_duals) {
    FreqDuals d = alg->duals;
    for (auto& b : d.beta) b *= 1.05;
    plan = primal_from_duals(d, dt, kappa);
    energy = eval_energy(plan, dt, kappa);
  }

  const double ftol = 1e-6 * f_max;
  c.expect(row_pattern_holds(plan, dt, ftol), "row_property");
  c.expect(columns_coincide(plan, dt, ftol), "column_property");
  // The threshold rule bounds the break from below and is exact for NoTransition.
  const auto seen = observed_transition(plan, dt, ftol);
  const int k = sc.num_devices();
  c.expect(verdict_slot(seen, k) >= verdict_slot(alg->verdict, k) &&
               (seen.kind == TransitionVerdict::Kind::NoTransition) ==
                   (alg->verdict.kind == TransitionVerdict::Kind::NoTransition),
           "transition_consistency", "predicted " + to_string(alg->verdict) + ", observed " + to_string(seen));
  double worst = 0.0;
  for (int n = 1; n <= sc.num_devices(); ++n) {
    double done = 0.0;
    for (int m = n + 1; m <= sc.num_devices() + 1; ++m) done += plan(n, m) * dt[m];
    worst = std::max(worst, std::fabs(done - cycles[static_cast<std::size_t>(n - 1)]) / cycles[static_cast<std::size_t>(n - 1)]);
  }
  c.expect(worst <= opt.rel_tol, "completion", "relative residual " + std::to_string(worst));
  const auto oracle = solve_freq_oracle(cycles, dt, f_max, kappa);
  const double rel = std::fabs(energy - oracle.energy) / oracle.energy;
  c.expect(rel <= opt.rel_tol, "oracle_sandwich", "relative gap to interior point " + std::to_string(rel));
}

inline void check_schemes(Checker& c, const Scenario& sc, const ValidateOptions& opt) {
  GbdOptions gopt;
  SolveReport rep;
  try {
    rep = run_gbd(sc, gopt);
  } catch (const InfeasibleError&) {
    const auto x = solve_exhaustive(sc);
    c.expect(!x.solved(), "gbd_infeasibility", "GBD found no schedule but enumeration did");
    return;
  }
  bool monotone = true;
  for (std::size_t i = 1; i < rep.trace.size(); ++i)
    if (rep.trace[i].ub > rep.trace[i - 1].ub || rep.trace[i].lb < rep.trace[i - 1].lb) monotone = false;
  for (const auto& row : rep.trace)
    if (row.lb > row.ub * (1.0 + 1e-9)) monotone = false;
  c.expect(monotone, "bound_monotonicity");

  const auto x = solve_exhaustive(sc);
  if (x.solved()) {
    const double slack = opt.rel_tol * x.energy;
    c.expect(rep.lb <= x.energy + slack && x.energy <= rep.ub + slack, "bound_sandwich");
    c.expect(rep.energy - x.energy <= 1e-3 * x.energy, "gbd_optimality",
             "gbd " + std::to_string(rep.energy) + " vs enumeration " + std::to_string(x.energy));
  }
  const double ep = rep.energy;
  const double tol = 1e-6 * ep;
  for (const auto& r : {solve_jsora(sc, gopt), solve_sync(sc, gopt), solve_random(sc, sc.seed)})
    if (r.solved()) c.expect(ep <= r.energy + tol, "dominance", to_string(r.scheme) + " below Proposed");
}

}  // namespace detail

/// Checks one scenario. Frequency checks always run; scheme checks run when asked.
inline void validate_scenario(ValidationReport& report, int instance, const Scenario& sc, const ValidateOptions& opt,
                              bool schemes) {
  detail::Checker c{report, instance, sc};
  detail::check_frequency(c, sc, opt);
  if (schemes) detail::check_schemes(c, sc, opt);
}

/// Randomised invariant suite. Instance i uses seed base_seed + i. Every
/// scheme_every-th instance runs the scheme checks with K cycling over
/// 3..scheme_max_devices; the others cycle K over 2..max_devices.
inline ValidationReport run_validation(const ScenarioConfig& base, const ValidateOptions& opt) {
  ValidationReport report;
  for (int i = 0; i < opt.instances; ++i) {
    ScenarioConfig cfg = base;
    cfg.tasks.reset();
    const bool schemes = opt.scheme_every > 0 && i % opt.scheme_every == 0 && opt.scheme_max_devices >= 3;
    cfg.num_devices = schemes ? 3 + (i / opt.scheme_every) % (opt.scheme_max_devices - 2)
                              : 2 + i % std::max(1, opt.max_devices - 1);
    const Scenario sc = generate_scenario(cfg, base.seed + static_cast<std::uint64_t>(i));
    validate_scenario(report, i, sc, opt, schemes);
    ++report.instances;
  }
  return report;
}

}  // namespace amec

#endif  // AMEC_VALIDATION_HPP
