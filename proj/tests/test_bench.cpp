#include "perpetuity/bench.hpp"

#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

using namespace perpetuity;

namespace {

BenchConfig small_config() {
  BenchConfig c;
  c.T = 50.0;
  c.n_trials = 3;
  c.trunc_T = 20.0;
  c.max_paths = 2000;
  return c;
}

}  // namespace

TEST(BenchConfig, Validation) {
  BenchConfig c = small_config();
  EXPECT_NO_THROW(c.check());
  c.n_trials = 0;
  EXPECT_THROW(c.check(), ModelError);
  c = small_config();
  c.gamma = 0.0;
  EXPECT_THROW(c.check(), ModelError);
  c = small_config();
  c.ks_target = -0.1;
  EXPECT_THROW(c.check(), ModelError);
}

TEST(BenchConfig, FromJson) {
  const BenchConfig c = bench_config_from_json(
      {{"T", 100.0}, {"n_trials", 4}, {"ks_target", 0.05}, {"base_seed", 7}});
  EXPECT_EQ(c.T, 100.0);
  EXPECT_EQ(c.n_trials, 4);
  ASSERT_TRUE(c.ks_target);
  EXPECT_EQ(*c.ks_target, 0.05);
  EXPECT_EQ(c.base_seed, 7u);
  EXPECT_EQ(c.gamma, 2.0);
  EXPECT_FALSE(bench_config_from_json({{"ks_target", nullptr}}).ks_target);
  EXPECT_THROW(bench_config_from_json({{"repeats", 0}}), ModelError);
}

TEST(ReversalBench, SingleTrialHasZeroSpread) {
  BenchConfig c = small_config();
  c.n_trials = 1;
  const ReversalBench r = run_reversal_bench(c, ReversalMethod::A);
  ASSERT_EQ(r.trials.size(), 1u);
  EXPECT_EQ(r.table.std_ks, 0.0);
  EXPECT_EQ(r.table.median_ks, r.trials[0].distance);
}

TEST(ReversalBench, SameSeedSameDistances) {
  const BenchConfig c = small_config();
  for (ReversalMethod m : {ReversalMethod::A, ReversalMethod::B}) {
    const ReversalBench a = run_reversal_bench(c, m), b = run_reversal_bench(c, m);
    for (std::size_t t = 0; t < a.trials.size(); ++t)
      EXPECT_EQ(a.trials[t].distance, b.trials[t].distance);
  }
}

TEST(NaiveSearch, LooseTargetNeedsOnePath) {
  BenchConfig c = small_config();
  c.ks_target = 1.0;
  const NaiveReport r = run_naive_until(c);
  EXPECT_EQ(r.paths_needed, 1u);
  EXPECT_FALSE(r.censored);
  EXPECT_LE(r.ks, 1.0);
}

TEST(NaiveSearch, UnreachableTargetIsCensored) {
  BenchConfig c = small_config();
  c.ks_target = 1e-6;
  c.max_paths = 150;
  const NaiveReport r = run_naive_until(c);
  EXPECT_TRUE(r.censored);
  EXPECT_EQ(r.paths_needed, 150u);
}

TEST(NaiveSearch, FirstCrossingMatchesFixedSample) {
  BenchConfig c = small_config();
  c.ks_target = 0.08;
  const NaiveReport r = run_naive_until(c);
  ASSERT_FALSE(r.censored);
  EXPECT_LE(naive_ks(c, r.paths_needed).distance, 0.08);
  if (r.paths_needed > 1) EXPECT_GT(naive_ks(c, r.paths_needed - 1).distance, 0.08);
  EXPECT_THROW(run_naive_until(small_config()), ModelError);
}

TEST(Speedup, EqualTimingsGiveUnitRatio) {
  SummaryTable t;
  t.median_seconds = 0.5;
  NaiveReport n;
  n.seconds = 0.5;
  n.paths_needed = 300;
  BenchConfig c = small_config();
  c.T = 1000.0;
  c.trunc_T = 100.0;
  const SpeedupReport s = speedup_report(t, n, c);
  EXPECT_EQ(s.time_ratio, 1.0);
  EXPECT_EQ(s.paths_needed, 300.0);
  EXPECT_DOUBLE_EQ(s.step_ratio, 30.0);
}

TEST(RunBench, WritesReportAndTrials) {
  BenchConfig c = small_config();
  c.n_trials = 2;
  c.ks_target = 0.2;
  const auto dir = std::filesystem::temp_directory_path() / "perpetuity_bench_test";
  std::filesystem::create_directories(dir);
  std::vector<std::filesystem::path> written;
  const nlohmann::json j = run_bench(c, dir / "report.json", &written);
  EXPECT_EQ(j.at("schema_version"), 1);
  for (const char* k : {"method_a", "method_b", "naive", "speedup", "config"})
    EXPECT_TRUE(j.contains(k)) << k;
  EXPECT_EQ(j["config"]["ks_target"], 0.2);
  ASSERT_TRUE(std::filesystem::exists(dir / "report.json"));
  std::ifstream csv(dir / "report.trials.csv");
  std::string line;
  std::getline(csv, line);
  EXPECT_EQ(line, "method,trial,ks,seconds");
  int rows = 0;
  while (std::getline(csv, line)) ++rows;
  EXPECT_EQ(rows, 4);
  EXPECT_EQ(written.size(), 2u);
  std::filesystem::remove_all(dir);
}
