#pragma once

#include "perpetuity/analytics.hpp"
#include "perpetuity/paths.hpp"

#include "json.hpp"

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

namespace perpetuity {

struct BenchConfig {
  double gamma = 2.0;
  double a = 1.0;
  double T = 10'000.0;
  double delta = 1.0 / 24.0;
  int n_trials = 20;
  std::uint64_t base_seed = 1;
  double x_start = 1.0;
  std::optional<double> ks_target;
  std::size_t max_paths = 1'000'000;
  double trunc_T = 100.0;
  int repeats = 1;
  unsigned threads = 1;

  void check() const;
};

BenchConfig bench_config_from_json(const nlohmann::json& j);

struct ReversalBench {
  SummaryTable table;
  std::vector<KSReport> trials;
  std::vector<double> seconds;
};

/// n_trials single-path reversal runs of the OU example (trial t uses
/// stream t of base_seed). Per trial the KS distance of the chi-marginal to
/// the exact X0 law and the wall-clock time of path generation plus KS.
ReversalBench run_reversal_bench(const BenchConfig& cfg, ReversalMethod method);

struct NaiveReport {
  std::size_t paths_needed = 0;
  double seconds = 0.0;
  bool censored = false;
  double ks = 1.0;  // KS at paths_needed
};

/// Grows a naive sample (horizon trunc_T) until its KS distance drops to
/// ks_target. KS is recomputed every 100 paths and refined to the first
/// crossing inside the last block; hitting max_paths reports a censored
/// result. `repeat` selects an independent stream family.
NaiveReport run_naive_until(const BenchConfig& cfg, int repeat = 0);

/// KS of a fixed-size naive sample (stream family `repeat`).
KSReport naive_ks(const BenchConfig& cfg, std::size_t n_paths, int repeat = 0);

struct SpeedupReport {
  double reversal_seconds = 0.0;
  double naive_seconds = 0.0;
  double time_ratio = 0.0;
  double paths_needed = 0.0;
  double step_ratio = 0.0;  // naive simulated steps / reversal simulated steps
  bool censored = false;
};

SpeedupReport speedup_report(const SummaryTable& reversal, const NaiveReport& naive,
                             const BenchConfig& cfg);

/// Runs both reversal methods, `repeats` naive searches (when ks_target is
/// set, otherwise the Method A median is used) and writes report JSON plus
/// a per-trial CSV next to it.
nlohmann::json run_bench(const BenchConfig& cfg, const std::filesystem::path& report,
                         std::vector<std::filesystem::path>* written = nullptr);

}  // namespace perpetuity
