#include <sys/wait.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

namespace {

struct Run {
  int code = -1;
  std::string out;
};

Run bench(const std::string& args) {
  const std::string cmd = std::string(AMEC_BENCH_PATH) + " " + args + " 2>/dev/null";
  Run r;
  FILE* p = popen(cmd.c_str(), "r");
  if (!p) return r;
  char buf[4096];
  while (std::fgets(buf, sizeof buf, p)) r.out += buf;
  const int status = pclose(p);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  return r;
}

std::string temp_file(const std::string& name, const std::string& text) {
  const auto path = std::filesystem::temp_directory_path() / name;
  std::ofstream(path) << text;
  return path.string();
}

std::vector<std::string> lines(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream ss(s);
  for (std::string l; std::getline(ss, l);) out.push_back(l);
  return out;
}

// Drops the trailing wall_ms field.
std::string without_timing(const std::string& line) { return line.substr(0, line.rfind(',')); }

std::string small_config() { return temp_file("amec_k4.json", R"({"K": 4, "seed": 3})"); }

}  // namespace

TEST(Cli, SolveSucceeds) {
  const auto r = bench("solve --config " + small_config());
  EXPECT_EQ(r.code, 0);
  EXPECT_NE(r.out.find("status: converged"), std::string::npos);
}

TEST(Cli, HeuristicMasterExitsThree) {
  const auto r = bench("solve --seed 3 --max-iter 5");
  EXPECT_EQ(r.code, 3);
}

TEST(Cli, InfeasibleScenarioExitsTwo) {
  const auto cfg = temp_file("amec_far.json", R"({"K": 3, "distance_m_range": [3.0, 4.0], "seed": 1})");
  EXPECT_EQ(bench("solve --config " + cfg).code, 2);
}

TEST(Cli, ConfigErrorsExitFour) {
  const auto bad = temp_file("amec_bad.json", R"({"K": 3, "unknown_key": 1})");
  EXPECT_EQ(bench("solve --config " + bad).code, 4);
  const auto neg = temp_file("amec_neg.json", R"({"K": -2})");
  EXPECT_EQ(bench("solve --config " + neg).code, 4);
  EXPECT_EQ(bench("sweep --axis K --values 3,x").code, 4);
  EXPECT_EQ(bench("baselines --schemes greedy").code, 4);
  EXPECT_EQ(bench("solve --no-such-flag").code, 4);
}

TEST(Cli, ValidateNegativeControlExitsFive) {
  const auto ok = bench("validate --instances 5");
  EXPECT_EQ(ok.code, 0);
  const auto out = (std::filesystem::temp_directory_path() / "amec_fail.json").string();
  const auto bad = bench("validate --instances 5 --perturb-duals --out " + out);
  EXPECT_EQ(bad.code, 5);
  EXPECT_TRUE(std::filesystem::exists(out));
}

TEST(Cli, SweepIsDeterministic) {
  const std::string args = "sweep --axis K --values 2,3 --seeds 2 --schemes proposed,random --seed 11";
  const auto a = bench(args);
  const auto b = bench(args);
  ASSERT_EQ(a.code, 0);
  ASSERT_EQ(b.code, 0);
  const auto la = lines(a.out);
  const auto lb = lines(b.out);
  ASSERT_EQ(la.size(), lb.size());
  ASSERT_FALSE(la.empty());
  EXPECT_EQ(la.front(), "scenario_id,axis_value,seed,scheme,energy_J,status,iterations,ub_J,lb_J,wall_ms");
  // 2 values x 2 seeds x 2 schemes, then mean and std per value and scheme.
  EXPECT_EQ(la.size(), 1u + 8u + 8u);
  for (std::size_t i = 1; i < la.size(); ++i) EXPECT_EQ(without_timing(la[i]), without_timing(lb[i])) << i;
}

TEST(Cli, BaselinesListsEachScheme) {
  const auto r = bench("baselines --config " + small_config() + " --schemes proposed,jsora,sync,exhaustive");
  EXPECT_EQ(r.code, 0);
  for (const char* name : {"Proposed", "JSORA", "Sync", "Exhaustive"}) EXPECT_NE(r.out.find(name), std::string::npos) << name;
}
