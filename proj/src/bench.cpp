#include "perpetuity/bench.hpp"

#include "perpetuity/estimators.hpp"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <thread>

namespace perpetuity {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

ModelSpec bench_model(const BenchConfig& cfg) {
  return make_ou_perpetuity_example(cfg.gamma, cfg.a);
}

PathConfig path_config(const BenchConfig& cfg, double horizon, std::uint64_t stream) {
  PathConfig pc;
  pc.horizon_T = horizon;
  pc.step_delta = cfg.delta;
  pc.seed = cfg.base_seed;
  pc.stream_id = stream;
  pc.keep_increments = false;
  return pc;
}

constexpr std::uint64_t kNaiveFamily = 1'000'000;

}  // namespace

void BenchConfig::check() const {
  if (!(gamma > 0.0) || !(a > 0.0)) throw ModelError("bench: gamma and a must be positive");
  if (!(T > 0.0) || !(delta > 0.0) || !(trunc_T > 0.0))
    throw ModelError("bench: horizons and step must be positive");
  if (n_trials < 1) throw ModelError("bench: n_trials must be at least 1");
  if (repeats < 1) throw ModelError("bench: repeats must be at least 1");
  if (max_paths < 1) throw ModelError("bench: max_paths must be at least 1");
  if (ks_target && !(*ks_target >= 0.0)) throw ModelError("bench: ks_target must be >= 0");
}

BenchConfig bench_config_from_json(const nlohmann::json& j) {
  BenchConfig c;
  c.gamma = j.value("gamma", c.gamma);
  c.a = j.value("a", c.a);
  c.T = j.value("T", c.T);
  c.delta = j.value("delta", c.delta);
  c.n_trials = j.value("n_trials", c.n_trials);
  c.base_seed = j.value("base_seed", c.base_seed);
  c.x_start = j.value("x_start", c.x_start);
  if (j.contains("ks_target") && !j["ks_target"].is_null())
    c.ks_target = j["ks_target"].get<double>();
  c.max_paths = j.value("max_paths", c.max_paths);
  c.trunc_T = j.value("trunc_T", c.trunc_T);
  c.repeats = j.value("repeats", c.repeats);
  c.threads = j.value("threads", c.threads);
  c.check();
  return c;
}

ReversalBench run_reversal_bench(const BenchConfig& cfg, ReversalMethod method) {
  cfg.check();
  const ModelSpec spec = bench_model(cfg);
  const InvariantDensity density = ou_density(spec);
  const ReferenceLaw law = ou_reference_law(cfg.gamma, cfg.a);
  const std::size_t n = static_cast<std::size_t>(cfg.n_trials);
  ReversalBench out;
  out.trials.resize(n);
  out.seconds.resize(n);
  std::vector<std::exception_ptr> errors(n);

  auto trial = [&](std::size_t t) {
    try {
      const PathConfig pc = path_config(cfg, cfg.T, t);
      const auto t0 = Clock::now();
      ReversedPath path = method == ReversalMethod::A
                              ? simulate_reversed(spec, density, pc, {cfg.x_start})
                              : reverse_from_forward(spec, pc, reference_point(spec),
                                                     {cfg.x_start});
      const EmpiricalJointMeasure m = measure_from_path(path, 0);
      out.trials[t] = ks_distance(m.sorted(Marginal::Perpetuity()), law);
      out.seconds[t] = seconds_since(t0);
    } catch (...) {
      errors[t] = std::current_exception();
    }
  };
  const unsigned threads = std::max(1u, std::min<unsigned>(cfg.threads, cfg.n_trials));
  std::vector<std::thread> pool;
  for (unsigned w = 0; w < threads; ++w)
    pool.emplace_back([&, w] {
      for (std::size_t t = w; t < n; t += threads) trial(t);
    });
  for (auto& th : pool) th.join();
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
  out.table = summary_stats(out.trials, out.seconds, to_string(method));
  return out;
}

KSReport naive_ks(const BenchConfig& cfg, std::size_t n_paths, int repeat) {
  cfg.check();
  const ModelSpec spec = bench_model(cfg);
  const InvariantDensity density = ou_density(spec);
  const ReferenceLaw law = ou_reference_law(cfg.gamma, cfg.a);
  const PathConfig pc = path_config(cfg, cfg.trunc_T, kNaiveFamily + static_cast<std::uint64_t>(repeat));
  const EmpiricalJointMeasure m = estimate_naive(spec, density, pc, n_paths, cfg.threads);
  return ks_distance(m.sorted(Marginal::Perpetuity()), law);
}

NaiveReport run_naive_until(const BenchConfig& cfg, int repeat) {
  cfg.check();
  if (!cfg.ks_target) throw ModelError("run_naive_until: ks_target is required");
  const double target = *cfg.ks_target;
  const ModelSpec spec = bench_model(cfg);
  const InvariantDensity density = ou_density(spec);
  const ReferenceLaw law = ou_reference_law(cfg.gamma, cfg.a);
  const PathConfig pc =
      path_config(cfg, cfg.trunc_T, kNaiveFamily + static_cast<std::uint64_t>(repeat));
  constexpr std::size_t kBlock = 100;

  NaiveReport rep;
  const auto t0 = Clock::now();
  std::vector<double> values;  // in path order
  std::vector<double> sorted;
  while (values.size() < cfg.max_paths) {
    const std::size_t start = values.size();
    const std::size_t count = std::min(kBlock, cfg.max_paths - start);
    const EmpiricalJointMeasure block =
        estimate_naive(spec, density, pc, count, cfg.threads, start);
    const auto& bx = block.perpetuity();
    values.insert(values.end(), bx.begin(), bx.end());
    std::vector<double> bs(bx.begin(), bx.end());
    std::sort(bs.begin(), bs.end());
    std::vector<double> merged;
    merged.reserve(sorted.size() + bs.size());
    std::merge(sorted.begin(), sorted.end(), bs.begin(), bs.end(), std::back_inserter(merged));
    sorted = std::move(merged);
    const KSReport ks = ks_distance(sorted, law);
    rep.ks = ks.distance;
    if (ks.distance <= target) {
      std::vector<double> prefix(values.begin(), values.begin() + static_cast<long>(start));
      std::sort(prefix.begin(), prefix.end());
      for (std::size_t k = start; k < values.size(); ++k) {
        prefix.insert(std::upper_bound(prefix.begin(), prefix.end(), values[k]), values[k]);
        const double d = ks_distance(prefix, law).distance;
        if (d <= target) {
          rep.paths_needed = k + 1;
          rep.ks = d;
          rep.seconds = seconds_since(t0);
          return rep;
        }
      }
    }
  }
  rep.paths_needed = cfg.max_paths;
  rep.censored = true;
  rep.seconds = seconds_since(t0);
  return rep;
}

SpeedupReport speedup_report(const SummaryTable& reversal, const NaiveReport& naive,
                             const BenchConfig& cfg) {
  SpeedupReport r;
  r.reversal_seconds = reversal.median_seconds;
  r.naive_seconds = naive.seconds;
  r.time_ratio = reversal.median_seconds > 0.0 ? naive.seconds / reversal.median_seconds
                                               : std::numeric_limits<double>::infinity();
  if (naive.seconds == reversal.median_seconds) r.time_ratio = 1.0;
  r.paths_needed = static_cast<double>(naive.paths_needed);
  r.step_ratio = r.paths_needed * cfg.trunc_T / cfg.T;
  r.censored = naive.censored;
  return r;
}

nlohmann::json run_bench(const BenchConfig& cfg, const std::filesystem::path& report,
                         std::vector<std::filesystem::path>* written) {
  cfg.check();
  const ReversalBench a = run_reversal_bench(cfg, ReversalMethod::A);
  const ReversalBench b = run_reversal_bench(cfg, ReversalMethod::B);

  BenchConfig ncfg = cfg;
  if (!ncfg.ks_target) ncfg.ks_target = a.table.median_ks;
  std::vector<double> paths, secs;
  nlohmann::json naive = nlohmann::json::array();
  bool censored = false;
  for (int r = 0; r < cfg.repeats; ++r) {
    const NaiveReport nr = run_naive_until(ncfg, r);
    paths.push_back(static_cast<double>(nr.paths_needed));
    secs.push_back(nr.seconds);
    censored = censored || nr.censored;
    naive.push_back({{"repeat", r},
                     {"paths_needed", nr.paths_needed},
                     {"seconds", nr.seconds},
                     {"ks", nr.ks},
                     {"censored", nr.censored}});
  }
  NaiveReport median;
  median.paths_needed = static_cast<std::size_t>(std::llround(percentile(paths, 0.5)));
  median.seconds = percentile(secs, 0.5);
  median.censored = censored;
  const SpeedupReport sp = speedup_report(a.table, median, cfg);

  nlohmann::json j;
  j["schema_version"] = 1;
  j["config"] = {{"gamma", cfg.gamma},   {"a", cfg.a},
                 {"T", cfg.T},           {"delta", cfg.delta},
                 {"n_trials", cfg.n_trials}, {"base_seed", cfg.base_seed},
                 {"trunc_T", cfg.trunc_T}, {"ks_target", *ncfg.ks_target},
                 {"max_paths", cfg.max_paths}, {"repeats", cfg.repeats}};
  j["timing"] = "monotonic wall clock around path generation and KS only";
  j["method_a"] = to_json(a.table);
  j["method_b"] = to_json(b.table);
  j["naive"] = {{"repeats", naive},
                {"median_paths", median.paths_needed},
                {"median_seconds", median.seconds}};
  j["speedup"] = {{"time_ratio", sp.time_ratio},
                  {"paths_needed", sp.paths_needed},
                  {"step_ratio", sp.step_ratio},
                  {"censored", sp.censored}};

  std::ofstream(report) << j.dump(2) << '\n';
  std::filesystem::path csv = report;
  csv.replace_extension(".trials.csv");
  std::FILE* out = std::fopen(csv.string().c_str(), "w");
  if (!out) throw Error("cannot write " + csv.string());
  std::fprintf(out, "method,trial,ks,seconds\n");
  for (std::size_t t = 0; t < a.trials.size(); ++t)
    std::fprintf(out, "A,%zu,%.17g,%.6f\n", t, a.trials[t].distance, a.seconds[t]);
  for (std::size_t t = 0; t < b.trials.size(); ++t)
    std::fprintf(out, "B,%zu,%.17g,%.6f\n", t, b.trials[t].distance, b.seconds[t]);
  std::fclose(out);
  if (written) {
    written->push_back(report);
    written->push_back(csv);
  }
  return j;
}

}  // namespace perpetuity
