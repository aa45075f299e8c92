#include <limits>
#include <numeric>
#include <set>
#include <vector>

#include <gtest/gtest.h>

#include "amec/gbd.hpp"
#include "amec/master.hpp"
#include "amec/rng.hpp"

using namespace amec;

namespace {

AffineCut hand_cut() {
  AffineCut c = AffineCut::zero(CutKind::Optimality, 2);
  c.constant = 1.0;
  c.coeff = {{0.1, 0.5}, {0.3, 0.2}};
  return c;
}

AffineCut random_cut(Rng& rng, int k, CutKind kind) {
  AffineCut c = AffineCut::zero(kind, k);
  c.constant = kind == CutKind::Optimality ? rng.uniform(0.0, 1.0) : rng.uniform(-1.5, -0.5);
  for (auto& row : c.coeff)
    for (double& v : row) v = rng.uniform(-0.5, 0.5);
  return c;
}

CutLedger random_ledger(Rng& rng, int k, int opt_cuts, int feas_cuts) {
  CutLedger ledger;
  for (int i = 0; i < opt_cuts; ++i) ledger.add(random_cut(rng, k, CutKind::Optimality));
  for (int i = 0; i < feas_cuts; ++i) ledger.add(random_cut(rng, k, CutKind::Feasibility));
  return ledger;
}

// Dual-function cuts from solved schedules of a real instance.
CutLedger scenario_ledger(int k, std::uint64_t seed, int cuts) {
  ScenarioConfig cfg;
  cfg.num_devices = k;
  const Scenario sc = generate_scenario(cfg, seed);
  CutLedger ledger;
  std::vector<int> order(static_cast<std::size_t>(k));
  std::iota(order.begin(), order.end(), 0);
  int added = 0;
  Rng rng(seed);
  for (int attempt = 0; attempt < 4 * cuts && added < cuts; ++attempt) {
    std::vector<int> o = order;
    for (int i = k - 1; i > 0; --i) std::swap(o[i], o[rng.below(i + 1)]);
    try {
      const auto p = solve_primal_bcd(sc, Schedule(o));
      ledger.add(build_dual_optimality_cut(p, sc, added));
      ledger.add(build_slot_optimality_cut(p, sc, added));
      ++added;
    } catch (const InfeasibleError&) {
    }
  }
  return ledger;
}

MasterOptions with(MasterMethod m) {
  MasterOptions o;
  o.method = m;
  return o;
}

}  // namespace

TEST(EvalCut, HandExamples) {
  EXPECT_DOUBLE_EQ(eval_cut(hand_cut(), Schedule({0, 1})), 1.3);
  EXPECT_DOUBLE_EQ(eval_cut(hand_cut(), Schedule({1, 0})), 1.8);
  AffineCut z = AffineCut::zero(CutKind::Optimality, 3);
  z.constant = 0.7;
  EXPECT_DOUBLE_EQ(eval_cut(z, Schedule({2, 0, 1})), 0.7);
}

TEST(EvalCut, LagrangianSlotTerm) {
  LagrangianCut c;
  c.horizon = 1.0;
  // min a/t^2 + b t at t = cbrt(2a/b): 1.5 cbrt(2) a^(1/3) b^(2/3) for a = 1, b = 16 gives t = 0.5 and value 12.
  EXPECT_NEAR(c.slot_term(1.0, 16.0), 12.0, 1e-12);
  // Interior minimiser past the horizon clamps to t = T.
  EXPECT_NEAR(c.slot_term(1.0, 0.5), 1.5, 1e-12);
  EXPECT_NEAR(c.slot_term(0.0, -2.0), -2.0, 1e-12);
  EXPECT_NEAR(c.slot_term(0.0, 3.0), 0.0, 1e-12);
}

TEST(SolveMaster, SingleCutPicksIdentity) {
  CutLedger ledger;
  ledger.add(hand_cut());
  for (auto m : {MasterMethod::Enumeration, MasterMethod::BranchAndBound}) {
    const auto ms = solve_master(ledger, 2, with(m));
    EXPECT_EQ(ms.schedule, Schedule({0, 1}));
    EXPECT_DOUBLE_EQ(ms.psi, 1.3);
  }
}

TEST(SolveMaster, FeasibilityCutLeavesTheSwap) {
  CutLedger ledger;
  ledger.add(build_no_good_cut(Schedule({0, 1})));
  for (auto m : {MasterMethod::Enumeration, MasterMethod::BranchAndBound}) {
    const auto ms = solve_master(ledger, 2, with(m));
    EXPECT_EQ(ms.schedule, Schedule({1, 0}));
    EXPECT_EQ(ms.psi, 0.0);
  }
}

TEST(SolveMaster, AllExcludedIsInfeasible) {
  CutLedger ledger;
  ledger.add(build_no_good_cut(Schedule({0, 1})));
  ledger.add(build_no_good_cut(Schedule({1, 0})));
  EXPECT_THROW(solve_master(ledger, 2, with(MasterMethod::Enumeration)), InfeasibleError);
  EXPECT_THROW(solve_master(ledger, 2, with(MasterMethod::BranchAndBound)), InfeasibleError);
}

TEST(SolveMaster, TiesGoToSmallestOrder) {
  CutLedger ledger;
  ledger.add(AffineCut::zero(CutKind::Optimality, 4));
  for (auto m : {MasterMethod::Enumeration, MasterMethod::BranchAndBound})
    EXPECT_EQ(solve_master(ledger, 4, with(m)).schedule, Schedule::identity(4));
}

TEST(SolveMaster, ShapeMismatchThrows) {
  CutLedger ledger;
  ledger.add(hand_cut());
  EXPECT_THROW(solve_master(ledger, 3), DomainError);
}

TEST(SolveMasterProperty, BranchAndBoundEqualsEnumerationOnRandomLedgers) {
  Rng rng(71);
  for (int trial = 0; trial < 30; ++trial) {
    const int k = 3 + trial % 4;
    const CutLedger ledger = random_ledger(rng, k, 1 + trial % 6, trial % 3);
    const auto e = solve_master(ledger, k, with(MasterMethod::Enumeration));
    const auto b = solve_master(ledger, k, with(MasterMethod::BranchAndBound));
    EXPECT_EQ(b.psi, e.psi) << "trial " << trial;
    EXPECT_EQ(b.schedule, e.schedule) << "trial " << trial;
  }
}

TEST(SolveMasterProperty, BranchAndBoundEqualsEnumerationOnDualCuts) {
  for (std::uint64_t seed = 1; seed <= 4; ++seed) {
    const CutLedger ledger = scenario_ledger(6, seed, 4);
    if (ledger.size() == 0) continue;
    const auto e = solve_master(ledger, 6, with(MasterMethod::Enumeration));
    const auto b = solve_master(ledger, 6, with(MasterMethod::BranchAndBound));
    EXPECT_NEAR(b.psi, e.psi, 1e-12 * std::fabs(e.psi)) << "seed " << seed;
    EXPECT_EQ(b.schedule, e.schedule) << "seed " << seed;
  }
}

TEST(SolveMasterProperty, AddingCutsNeverLowersPsi) {
  Rng rng(72);
  for (int trial = 0; trial < 20; ++trial) {
    const int k = 4;
    CutLedger ledger;
    double prev = -std::numeric_limits<double>::infinity();
    for (int c = 0; c < 6; ++c) {
      ledger.add(random_cut(rng, k, c % 3 == 2 ? CutKind::Feasibility : CutKind::Optimality));
      double psi = 0.0;
      try {
        psi = solve_master(ledger, k).psi;
      } catch (const InfeasibleError&) {
        break;
      }
      EXPECT_GE(psi, prev);
      prev = psi;
    }
  }
}

TEST(SolveMasterProperty, ResultSatisfiesFeasibilityCuts) {
  Rng rng(73);
  MasterOptions opt;
  for (int trial = 0; trial < 30; ++trial) {
    const CutLedger ledger = random_ledger(rng, 5, 3, 4);
    MasterSolution ms;
    try {
      ms = solve_master(ledger, 5, opt);
    } catch (const InfeasibleError&) {
      continue;
    }
    for (const auto& c : ledger.cuts())
      if (c.kind() == CutKind::Feasibility) EXPECT_LE(c.eval(ms.schedule), opt.feasibility_tol);
  }
}

TEST(SolveMasterProperty, ExcludedSchedulesAreNeverReturned) {
  Rng rng(74);
  for (int trial = 0; trial < 10; ++trial) {
    const int k = 4;
    const CutLedger ledger = random_ledger(rng, k, 3, 0);
    std::set<Schedule> visited;
    for (int step = 0; step < 23; ++step) {
      const auto e = solve_master(ledger, k, with(MasterMethod::Enumeration), std::nullopt, &visited);
      const auto b = solve_master(ledger, k, with(MasterMethod::BranchAndBound), std::nullopt, &visited);
      const auto l = local_search_master(ledger, k, with(MasterMethod::LocalSearch), {Schedule::identity(k)}, &visited);
      EXPECT_EQ(visited.count(e.schedule), 0u);
      EXPECT_EQ(visited.count(l.schedule), 0u);
      EXPECT_EQ(b.schedule, e.schedule);
      EXPECT_GE(l.psi, e.psi);
      EXPECT_FALSE(l.complete);
      visited.insert(e.schedule);
    }
    // One schedule left.
    const auto last = solve_master(ledger, k, {}, std::nullopt, &visited);
    EXPECT_EQ(visited.count(last.schedule), 0u);
    visited.insert(last.schedule);
    EXPECT_THROW(solve_master(ledger, k, {}, std::nullopt, &visited), InfeasibleError);
  }
}

TEST(LocalSearchMaster, ReachesTheMinimumOfASeparableCut) {
  // A single affine cut with a unique optimum far from the start: local moves reach it.
  const int k = 6;
  AffineCut c = AffineCut::zero(CutKind::Optimality, k);
  for (int d = 0; d < k; ++d)
    for (int s = 0; s < k; ++s) c.coeff[d][s] = (d == k - 1 - s) ? 0.0 : 1.0 + 0.01 * d;
  CutLedger ledger;
  ledger.add(c);
  const auto ms = local_search_master(ledger, k, with(MasterMethod::LocalSearch), {Schedule::identity(k)}, nullptr);
  EXPECT_EQ(ms.schedule, Schedule({5, 4, 3, 2, 1, 0}));
  EXPECT_EQ(ms.psi, 0.0);
}
