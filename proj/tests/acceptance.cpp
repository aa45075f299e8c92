#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <limits>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "amec/baselines.hpp"
#include "amec/complexity.hpp"
#include "amec/convex_oracle.hpp"
#include "amec/freq_alloc.hpp"
#include "amec/gbd.hpp"
#include "amec/validation.hpp"

using namespace amec;

namespace {

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

double rel(double a, double b) { return std::fabs(a - b) / std::max(std::fabs(b), 1e-300); }

// Fluid first-come server on a grid of 1000 quanta per slot, each quantum
// carrying 1e-3 * F_max * dt_m cycles.
bool grid_feasible(const std::vector<double>& cycles, const TimeAllocation& dt, double f_max) {
  const int k = static_cast<int>(cycles.size());
  std::vector<double> left;
  double total = 0.0;
  for (double c : cycles) total += c;
  std::size_t head = 0;
  for (int m = 2; m <= k + 1; ++m) {
    left.push_back(cycles[static_cast<std::size_t>(m - 2)]);
    const double quantum = 1e-3 * f_max * dt[m];
    for (int q = 0; q < 1000; ++q) {
      double cap = quantum;
      while (cap > 0.0 && head < left.size()) {
        const double used = std::min(cap, left[head]);
        left[head] -= used;
        cap -= used;
        if (left[head] <= 0.0) ++head;
      }
    }
  }
  double rest = 0.0;
  for (double r : left) rest += r;
  return rest <= 1e-9 * total;
}

struct FreqInstance {
  std::vector<double> cycles;
  TimeAllocation dt;
  double f_max = 0.0;
};

FreqInstance random_freq_instance(Rng& rng, int k) {
  FreqInstance in;
  for (int n = 0; n < k; ++n) in.cycles.push_back(rng.uniform(1e4, 5e4) * rng.uniform(500.0, 1500.0));
  in.dt = TimeAllocation::zeros(k);
  double total = 0.0;
  for (int m = 0; m <= k + 1; ++m) total += (in.dt[m] = rng.uniform(0.05, 1.0));
  for (int m = 0; m <= k + 1; ++m) in.dt[m] /= total;
  return in;
}

// P(X >= s) for X ~ Binomial(n, 1/2).
double sign_test_p(int s, int n) {
  double p = 0.0;
  for (int j = s; j <= n; ++j) p += std::exp(std::lgamma(n + 1.0) - std::lgamma(j + 1.0) - std::lgamma(n - j + 1.0) - n * std::log(2.0));
  return p;
}

ScenarioConfig config(int k) {
  ScenarioConfig cfg;
  cfg.num_devices = k;
  return cfg;
}

double proposed_energy(const Scenario& sc) {
  const auto r = solve_proposed(sc);
  return r.solved() ? r.energy : std::nan("");
}

// ---------------------------------------------------------------------------

Outcome feasibility_equivalence() {
  Rng rng(1001);
  int agree = 0;
  int feasible = 0;
  for (int i = 0; i < 1000; ++i) {
    auto in = random_freq_instance(rng, 1 + static_cast<int>(rng.below(5)));
    const double factor = rng.below(2) ? rng.uniform(0.9, 0.998) : rng.uniform(1.002, 1.1);
    in.f_max = required_fmax(in.cycles, in.dt) * factor;
    const bool verdict = in.f_max >= required_fmax(in.cycles, in.dt);
    feasible += verdict;
    agree += verdict == grid_feasible(in.cycles, in.dt, in.f_max);
  }
  return {agree == 1000, std::to_string(agree) + "/1000 agree (" + std::to_string(feasible) + " feasible)"};
}

struct FreqCase {
  FreqInstance in;
  FreqAllocResult alg;
  FreqOracleSolution oracle;
};

std::vector<FreqCase> freq_cases() {
  Rng rng(2002);
  std::vector<FreqCase> out;
  while (out.size() < 200) {
    FreqCase c;
    const int k = 2 + static_cast<int>(rng.below(7));
    c.in = random_freq_instance(rng, k);
    const double need = required_fmax(c.in.cycles, c.in.dt);
    const double top = std::max(2.0, 1.5 * transition_threshold(c.in.cycles, c.in.dt, k + 1) / need);
    c.in.f_max = need * std::exp(rng.uniform(std::log(1.001), std::log(top)));
    c.alg = allocate_frequencies(c.in.cycles, c.in.dt, c.in.f_max, 1e-26);
    c.oracle = solve_freq_oracle(c.in.cycles, c.in.dt, c.in.f_max, 1e-26);
    out.push_back(std::move(c));
  }
  return out;
}

Outcome algorithm_optimality(const std::vector<FreqCase>& cases) {
  double worst = 0.0;
  int ok = 0;
  for (const auto& c : cases) {
    const double g = rel(c.alg.energy, c.oracle.energy);
    worst = std::max(worst, g);
    ok += g <= 1e-4;
  }
  return {ok == 200, std::to_string(ok) + "/200 within 1e-4, worst " + fmt("%.2e", worst)};
}

Outcome structure(const std::vector<FreqCase>& cases) {
  int rows = 0;
  int match = 0;
  int bound = 0;
  for (const auto& c : cases) {
    const int k = static_cast<int>(c.in.cycles.size());
    const double tol = 1e-6 * c.in.f_max;
    rows += row_pattern_holds(c.alg.plan, c.in.dt, tol);
    const auto predicted = transition_point(c.in.cycles, c.in.dt, c.in.f_max);
    const auto seen = observed_transition(c.alg.plan, c.in.dt, tol);
    match += predicted == seen;
    bound += verdict_slot(seen, k) >= verdict_slot(predicted, k);
  }
  return {rows == 200 && match == 200, "row pattern " + std::to_string(rows) + "/200, transition match " +
                                           std::to_string(match) + "/200, predicted slot <= observed on " +
                                           std::to_string(bound) + "/200"};
}

struct SchemeRun {
  Scenario sc;
  SchemeResult proposed, exhaustive, jsora, sync, random;
  SolveReport gbd;
  bool has_gbd = false;
};

std::vector<SchemeRun> small_runs() {
  std::vector<SchemeRun> out;
  for (int k = 3; k <= 5; ++k)
    for (std::uint64_t seed = 1; seed <= 50; ++seed) {
      SchemeRun r;
      r.sc = generate_scenario(config(k), seed);
      r.exhaustive = solve_exhaustive(r.sc);
      try {
        r.gbd = run_gbd(r.sc);
        r.has_gbd = true;
      } catch (const InfeasibleError&) {
      }
      r.proposed = solve_proposed(r.sc);
      r.jsora = solve_jsora(r.sc);
      r.sync = solve_sync(r.sc);
      r.random = solve_random(r.sc, seed);
      out.push_back(std::move(r));
    }
  return out;
}

Outcome gbd_exactness(const std::vector<SchemeRun>& runs) {
  int ok = 0;
  int solved = 0;
  int monotone = 0;
  double worst = 0.0;
  for (const auto& r : runs) {
    if (!r.exhaustive.solved()) {
      ok += !r.has_gbd;
      monotone += !r.has_gbd;
      continue;
    }
    ++solved;
    if (!r.has_gbd) continue;
    const double g = rel(r.gbd.energy, r.exhaustive.energy);
    worst = std::max(worst, g);
    ok += g <= 1e-3;
    bool mono = true;
    for (std::size_t j = 1; j < r.gbd.trace.size(); ++j)
      mono = mono && r.gbd.trace[j].ub <= r.gbd.trace[j - 1].ub && r.gbd.trace[j].lb >= r.gbd.trace[j - 1].lb;
    monotone += mono;
  }
  const int n = static_cast<int>(runs.size());
  return {ok == n && monotone == n, std::to_string(ok) + "/" + std::to_string(n) + " match (" + std::to_string(solved) +
                                        " feasible), worst gap " + fmt("%.2e", worst) + ", monotone traces " +
                                        std::to_string(monotone) + "/" + std::to_string(n)};
}

struct LargeRun {
  SchemeResult proposed, jsora, sync, random;
};

std::vector<LargeRun> large_runs(int seeds) {
  std::vector<LargeRun> out;
  for (int seed = 1; seed <= seeds; ++seed) {
    const Scenario sc = generate_scenario(config(10), static_cast<std::uint64_t>(seed));
    LargeRun r;
    r.proposed = solve_proposed(sc);
    r.jsora = solve_jsora(sc);
    r.sync = solve_sync(sc);
    r.random = solve_random(sc, static_cast<std::uint64_t>(seed));
    std::cerr << "  K=10 seed " << seed << " done\n";
    out.push_back(std::move(r));
  }
  return out;
}

Outcome dominance(const std::vector<SchemeRun>& small, const std::vector<LargeRun>& large) {
  int checked = 0;
  int ok = 0;
  auto check = [&](const SchemeResult& p, std::initializer_list<const SchemeResult*> others) {
    if (!p.solved()) return;
    for (const auto* o : others) {
      if (!o->solved()) continue;
      ++checked;
      ok += p.energy <= o->energy * (1 + 1e-6);
    }
  };
  for (const auto& r : small) check(r.proposed, {&r.jsora, &r.sync, &r.random});
  for (const auto& r : large) check(r.proposed, {&r.jsora, &r.sync, &r.random});
  return {ok == checked, std::to_string(ok) + "/" + std::to_string(checked) + " comparisons hold"};
}

Outcome magnitudes(const std::vector<LargeRun>& runs) {
  auto mean_reduction = [&](auto member, int& n) {
    double s = 0.0;
    n = 0;
    for (const auto& r : runs) {
      const SchemeResult& o = r.*member;
      if (!r.proposed.solved() || !o.solved()) continue;
      s += (o.energy - r.proposed.energy) / o.energy;
      ++n;
    }
    return n ? 100.0 * s / n : std::nan("");
  };
  int ns = 0, nj = 0, nr = 0;
  const double s = mean_reduction(&LargeRun::sync, ns);
  const double j = mean_reduction(&LargeRun::jsora, nj);
  const double r = mean_reduction(&LargeRun::random, nr);
  const bool pass = s >= 70 && s <= 95 && j >= 15 && j <= 45 && r >= 5 && r <= 35;
  return {pass, "vs Sync " + fmt("%.2f", s) + "% (n=" + std::to_string(ns) + ", band 70-95), vs JSORA " + fmt("%.2f", j) +
                    "% (n=" + std::to_string(nj) + ", band 15-45), vs Random " + fmt("%.2f", r) + "% (n=" +
                    std::to_string(nr) + ", band 5-35)"};
}

// Energies per axis value and seed for Proposed; NaN when infeasible.
Outcome trend(const std::string& name, const std::vector<double>& axis, bool increasing,
              const std::function<Scenario(double, std::uint64_t)>& make) {
  const int seeds = 50;
  std::vector<std::vector<double>> e(axis.size(), std::vector<double>(seeds));
  for (std::size_t a = 0; a < axis.size(); ++a)
    for (int s = 0; s < seeds; ++s) e[a][static_cast<std::size_t>(s)] = proposed_energy(make(axis[a], static_cast<std::uint64_t>(s + 1)));
  bool pass = true;
  std::ostringstream os;
  os << name << ":";
  for (std::size_t a = 0; a + 1 < axis.size(); ++a) {
    int wins = 0;
    int n = 0;
    double m0 = 0.0, m1 = 0.0;
    for (int s = 0; s < seeds; ++s) {
      const double x = e[a][static_cast<std::size_t>(s)];
      const double y = e[a + 1][static_cast<std::size_t>(s)];
      if (!std::isfinite(x) || !std::isfinite(y)) continue;
      m0 += x;
      m1 += y;
      if (x == y) continue;
      ++n;
      wins += increasing ? y > x : y < x;
    }
    const double p = sign_test_p(wins, n);
    const bool mean_ok = increasing ? m1 > m0 : m1 <= m0;
    pass = pass && p < 0.05 && mean_ok;
    os << " " << wins << "/" << n << " p=" << fmt("%.3g", p) << (mean_ok ? "" : " (mean wrong way)");
  }
  return {pass, os.str()};
}

Outcome trends() {
  const auto k = trend("K 2..6", {2, 3, 4, 5, 6}, true, [](double v, std::uint64_t s) {
    return generate_scenario(config(static_cast<int>(v)), s);
  });
  const auto t = trend("T", {0.6, 0.8, 1.0, 1.25, 1.5}, false, [](double v, std::uint64_t s) {
    auto cfg = config(5);
    cfg.deadline_s = v;
    return generate_scenario(cfg, s);
  });
  const auto a = trend("A_min at mean 3e4", {1e4, 1.5e4, 2e4, 2.5e4, 3e4}, false, [](double v, std::uint64_t s) {
    auto cfg = config(5);
    cfg.data_bits = {v, 6e4 - v};
    const Scenario drawn = generate_scenario(cfg, s);
    // Realised mean held at exactly 3e4 bits.
    double mean = 0.0;
    for (const auto& t : drawn.tasks) mean += t.data_bits / 5.0;
    std::vector<DeviceTask> tasks = drawn.tasks;
    for (auto& t : tasks) t.data_bits *= 3e4 / mean;
    cfg.tasks = tasks;
    return generate_scenario(cfg, s);
  });
  return {k.pass && t.pass && a.pass, k.detail + "; " + t.detail + "; " + a.detail};
}

Outcome transition_sweep() {
  const Scenario sc = generate_scenario(config(5), 1);
  const int k = 5;
  std::vector<double> cycles;
  for (const auto& t : sc.tasks) cycles.push_back(t.cycles());
  const TimeAllocation dt = validation_durations(sc);
  const double lo = required_fmax(cycles, dt) * 1.001;
  const double hi = transition_threshold(cycles, dt, k + 1) * 1.5;
  const int points = 60;
  std::vector<int> predicted, observed;
  for (int i = 0; i < points; ++i) {
    const double f_max = lo * std::pow(hi / lo, static_cast<double>(i) / (points - 1));
    predicted.push_back(verdict_slot(transition_point(cycles, dt, f_max), k));
    const auto o = solve_freq_oracle(cycles, dt, f_max, sc.params.server_energy_coef);
    observed.push_back(verdict_slot(observed_transition(o.plan, dt, 1e-4 * f_max), k));
  }
  int match = 0;
  for (int i = 0; i < points; ++i) match += predicted[static_cast<std::size_t>(i)] == observed[static_cast<std::size_t>(i)];
  const bool ordered = std::is_sorted(predicted.begin(), predicted.end());
  const bool ends = predicted.back() == k + 2;
  std::ostringstream os;
  os << "predicted";
  int last = -1;
  for (int s : predicted)
    if (s != last) os << " " << (s == k + 2 ? std::string("none") : "t" + std::to_string(s)), last = s;
  os << "; oracle";
  last = -1;
  for (int s : observed)
    if (s != last) os << " " << (s == k + 2 ? std::string("none") : "t" + std::to_string(s)), last = s;
  os << "; " << match << "/" << points << " points agree";
  return {ordered && ends && match == points, os.str()};
}

Outcome complexity() {
  const Scenario sc = generate_scenario(config(10), 1);
  ComplexityOptions co;
  co.instances = 30;
  co.min_sample_ms = 5;
  const auto rows = measure_complexity(sc, co);
  bool pass = !rows.empty();
  std::ostringstream os;
  double prev = 0.0;
  for (const auto& r : rows) {
    pass = pass && r.ratio >= 10.0 && r.ratio >= prev;
    prev = r.ratio;
    os << (r.slot == 12 ? std::string("none") : "t" + std::to_string(r.slot)) << "=" << fmt("%.1f", r.ratio) << "x ";
  }
  return {pass, os.str()};
}

Outcome properties(const std::vector<FreqCase>& cases, const std::vector<SchemeRun>& runs) {
  Rng rng(3003);
  int violations = 0;
  for (int c = 0; c < 100; ++c) {
    const double work = rng.uniform(1e7, 5e7);
    const TimeAllocation dt({0.1, 0.1, rng.uniform(0.05, 0.5), rng.uniform(0.05, 0.5)});
    const double f = work / (dt[2] + dt[3]);
    FrequencyPlan equal(2);
    equal(1, 2) = equal(1, 3) = f;
    const double base = eval_energy(equal, dt, 1e-26);
    for (int p = 0; p < 100; ++p) {
      double delta = rng.uniform(-0.99, 0.99) * std::min(f * dt[2], f * dt[3]);
      if (delta == 0.0) delta = 1.0;
      FrequencyPlan moved(2);
      moved(1, 2) = f + delta / dt[2];
      moved(1, 3) = f - delta / dt[3];
      violations += !(eval_energy(moved, dt, 1e-26) > base);
    }
  }
  int columns = 0;
  for (const auto& c : cases) columns += columns_coincide(c.alg.plan, c.in.dt, 1e-6 * c.in.f_max);
  int identities = 0;
  int checked = 0;
  for (const auto& r : runs) {
    if (!r.exhaustive.solved()) continue;
    ++checked;
    const auto p = solve_primal_oracle(r.sc, r.exhaustive.schedule);
    double price = 0.0;
    bool binding = false;
    for (int n = 1; n <= r.sc.num_devices(); ++n) {
      const auto& t = r.sc.tasks[static_cast<std::size_t>(p.schedule.device_at(n))];
      const double rho = p.duals.rho[static_cast<std::size_t>(n - 1)];
      price += rho * t.channel_gain * r.sc.params.harvest_power();
      const double have = harvested_energy(p.dt, n, t.channel_gain, r.sc.params);
      const double spend = offload_energy(t.data_bits, t.channel_gain, p.dt[n], r.sc.params.tx_energy_coef);
      binding = binding || (rho > 0.0 && rel(spend, have) <= 1e-5);
    }
    identities += rel(p.dt.total(), r.sc.deadline_s) <= 1e-5 && rel(price, p.duals.xi) <= 1e-5 && binding;
  }
  const bool pass = violations == 0 && columns == 200 && identities == checked;
  return {pass, "equal split violations " + std::to_string(violations) + "/10000, column coincidence " +
                    std::to_string(columns) + "/200, time/price/binding identities " + std::to_string(identities) +
                    "/" + std::to_string(checked)};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Acceptance criteria"};
  std::vector<int> only;
  int seeds = 50;
  app.add_option("--only", only, "criteria to run (default all)");
  app.add_option("--large-seeds", seeds, "K=10 seeds for criteria 5 and 6")->check(CLI::PositiveNumber);
  CLI11_PARSE(app, argc, argv);
  auto wanted = [&](int c) { return only.empty() || std::find(only.begin(), only.end(), c) != only.end(); };

  std::vector<FreqCase> cases;
  std::vector<SchemeRun> small;
  std::vector<LargeRun> large;
  if (wanted(2) || wanted(3) || wanted(10)) cases = freq_cases();
  if (wanted(4) || wanted(5) || wanted(10)) small = small_runs();
  if (wanted(5) || wanted(6)) large = large_runs(seeds);

  int failures = 0;
  auto report = [&](int id, const char* name, const std::function<Outcome()>& f) {
    if (!wanted(id)) return;
    const auto t0 = std::chrono::steady_clock::now();
    const Outcome o = f();
    const double s = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    failures += !o.pass;
    std::cout << "criterion " << id << " " << (o.pass ? "PASS" : "FAIL") << " " << name << ": " << o.detail << " ["
              << fmt("%.1f", s) << " s]" << std::endl;
  };
  report(1, "feasibility equivalence", feasibility_equivalence);
  report(2, "allocator optimality", [&] { return algorithm_optimality(cases); });
  report(3, "frequency structure", [&] { return structure(cases); });
  report(4, "GBD exactness", [&] { return gbd_exactness(small); });
  report(5, "dominance chain", [&] { return dominance(small, large); });
  report(6, "K=10 reductions", [&] { return magnitudes(large); });
  report(7, "trends", trends);
  report(8, "transition sweep", transition_sweep);
  report(9, "complexity", complexity);
  report(10, "property suites", [&] { return properties(cases, small); });
  return failures == 0 ? 0 : 1;
}
