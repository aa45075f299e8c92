#include <map>
#include <vector>

#include <gtest/gtest.h>

#include "amec/baselines.hpp"

using namespace amec;

namespace {

Scenario scenario(int k, std::uint64_t seed) {
  ScenarioConfig cfg;
  cfg.num_devices = k;
  return generate_scenario(cfg, seed);
}

double cycles_at(const Scenario& sc, const Schedule& s, int n) {
  return sc.tasks[static_cast<std::size_t>(s.device_at(n))].cycles();
}

}  // namespace

TEST(Jsora, EqualsProposedWhenCapacityIsAbundant) {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    Scenario sc = scenario(4, seed);
    sc.f_max_hz = 1e13;
    const auto p = solve_proposed(sc);
    const auto j = solve_jsora(sc);
    ASSERT_TRUE(p.solved());
    ASSERT_TRUE(j.solved());
    EXPECT_NEAR(j.energy, p.energy, 1e-5 * p.energy) << "seed " << seed;
  }
}

TEST(Jsora, RowsAreConstant) {
  const Scenario sc = scenario(4, 2);
  const auto j = solve_jsora(sc);
  ASSERT_TRUE(j.solved());
  for (int n = 1; n <= 4; ++n) {
    const double f = cycles_at(sc, j.schedule, n) / j.dt.span(n + 1, 5);
    for (int m = n + 1; m <= 5; ++m) EXPECT_NEAR(j.plan(n, m), f, 1e-9 * f);
  }
  for (int m = 2; m <= 5; ++m) EXPECT_LE(j.plan.column_sum(m), sc.f_max_hz * (1 + 1e-9));
}

TEST(Sync, ComputesOnlyInTheLastSlot) {
  const Scenario sc = scenario(4, 2);
  const auto s = solve_sync(sc);
  ASSERT_TRUE(s.solved());
  for (int n = 1; n <= 4; ++n) {
    for (int m = n + 1; m <= 4; ++m) EXPECT_EQ(s.plan(n, m), 0.0);
    const double f = cycles_at(sc, s.schedule, n) / s.dt[5];
    EXPECT_NEAR(s.plan(n, 5), f, 1e-9 * f);
  }
  EXPECT_LE(s.plan.column_sum(5), sc.f_max_hz * (1 + 1e-9));
}

TEST(Sync, InfeasibleWhenServerTooSlow) {
  Scenario sc = scenario(3, 2);
  double total = 0.0;
  for (const auto& t : sc.tasks) total += t.cycles();
  sc.f_max_hz = 0.9 * total / sc.deadline_s;
  EXPECT_EQ(solve_sync(sc).status, SchemeStatus::Infeasible);
}

TEST(Schemes, SingleDeviceSchemesCoincide) {
  const Scenario sc = scenario(1, 5);
  const auto p = solve_proposed(sc);
  ASSERT_TRUE(p.solved());
  EXPECT_NEAR(solve_jsora(sc).energy, p.energy, 1e-6 * p.energy);
  EXPECT_NEAR(solve_random(sc, 9).energy, p.energy, 1e-6 * p.energy);
  EXPECT_NEAR(solve_sync(sc).energy, p.energy, 1e-6 * p.energy);
}

TEST(Schemes, DominanceChain) {
  for (int k = 3; k <= 4; ++k) {
    for (std::uint64_t seed = 1; seed <= 4; ++seed) {
      const Scenario sc = scenario(k, seed);
      const auto ex = solve_exhaustive(sc);
      const auto p = solve_proposed(sc);
      if (!ex.solved()) {
        EXPECT_FALSE(p.solved());
        continue;
      }
      ASSERT_TRUE(p.solved());
      EXPECT_LE(ex.energy, p.energy * (1 + 1e-9));
      EXPECT_LE(p.energy - ex.energy, 1e-3 * ex.energy);
      for (const auto& other : {solve_jsora(sc), solve_sync(sc), solve_random(sc, seed)}) {
        if (!other.solved()) continue;
        EXPECT_LE(p.energy, other.energy * (1 + 1e-6)) << to_string(other.scheme) << " K=" << k << " seed " << seed;
        EXPECT_LE(ex.energy, other.energy * (1 + 1e-9));
      }
    }
  }
}

TEST(Random, DeterministicAndUniform) {
  EXPECT_EQ(random_schedule(6, 42), random_schedule(6, 42));
  std::map<std::vector<int>, int> counts;
  for (std::uint64_t seed = 0; seed < 6000; ++seed) ++counts[random_schedule(3, seed).order()];
  EXPECT_EQ(counts.size(), 6u);
  for (const auto& [order, n] : counts) {
    EXPECT_GT(n, 850);
    EXPECT_LT(n, 1150);
  }
  const Scenario sc = scenario(4, 3);
  const auto a = solve_random(sc, 17);
  const auto b = solve_random(sc, 17);
  EXPECT_EQ(a.schedule, b.schedule);
  EXPECT_EQ(a.energy, b.energy);
}

TEST(Exhaustive, SymmetricDevicesTie) {
  ScenarioConfig cfg;
  cfg.num_devices = 2;
  cfg.tasks = std::vector<DeviceTask>{{3e4, 1000.0, 0.5, 5e-4}, {3e4, 1000.0, 0.5, 5e-4}};
  const Scenario sc = generate_scenario(cfg, 1);
  const double a = solve_primal_bcd(sc, Schedule({0, 1})).energy;
  const double b = solve_primal_bcd(sc, Schedule({1, 0})).energy;
  EXPECT_NEAR(a, b, 1e-9 * a);
  EXPECT_EQ(solve_exhaustive(sc).schedule, Schedule({0, 1}));
}

TEST(Exhaustive, RefusesLargeK) {
  const Scenario sc = scenario(9, 1);
  EXPECT_THROW(solve_exhaustive(sc), ConfigError);
  ExhaustiveOptions opt;
  opt.max_devices = 2;
  EXPECT_THROW(solve_exhaustive(scenario(3, 1), opt), ConfigError);
}

TEST(Exhaustive, ThreadCountDoesNotChangeTheAnswer) {
  const Scenario sc = scenario(4, 6);
  ExhaustiveOptions one, four;
  four.threads = 4;
  const auto a = solve_exhaustive(sc, one);
  const auto b = solve_exhaustive(sc, four);
  EXPECT_EQ(a.schedule, b.schedule);
  EXPECT_EQ(a.energy, b.energy);
}

TEST(SchemeNames, ParseIsCaseInsensitive) {
  EXPECT_EQ(parse_scheme("jsora"), Scheme::JSORA);
  EXPECT_EQ(parse_scheme("PROPOSED"), Scheme::Proposed);
  EXPECT_EQ(parse_scheme("Exhaustive"), Scheme::Exhaustive);
  EXPECT_THROW(parse_scheme("greedy"), ConfigError);
}
