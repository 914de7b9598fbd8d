#include "perpetuity/cli.hpp"

#include "perpetuity/analytics.hpp"
#include "perpetuity/bench.hpp"
#include "perpetuity/estimators.hpp"
#include "perpetuity/model_io.hpp"
#include "perpetuity/pde.hpp"
#include "perpetuity/wellposedness.hpp"

#include "CLI11.hpp"
#include "json.hpp"

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <ostream>
#include <thread>

namespace perpetuity {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

std::string utc_now() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

struct Options {
  std::string model;
  std::string out;
  std::string manifest;
  unsigned threads = std::max(1u, std::thread::hardware_concurrency());

  // simulate-reverse / simulate-naive
  std::string method = "a";
  double x = 1.0;
  double T = 10'000.0;
  double delta = 1.0 / 24.0;
  std::uint64_t seed = 0;
  std::vector<double> z0;
  std::string hist;
  std::string dump;
  int marginal = -1;
  std::size_t paths = 1000;
  std::optional<double> trunc_T;

  // pde-solve / bench
  std::string grid;
  std::string config;
};

struct Run {
  json manifest;
  std::vector<fs::path> outputs;
  std::ostream& out;

  void wrote(const fs::path& p) { outputs.push_back(p); }
};

void write_text(const fs::path& p, const std::string& text) {
  std::ofstream f(p);
  if (!f) throw Error("cannot write " + p.string());
  f << text;
}

json verdict_json(const FinitenessVerdict& v) {
  json scan = json::array();
  for (const auto& e : v.scan)
    scan.push_back({{"epsilon", e.epsilon}, {"i_minus", e.i_minus}, {"i_plus", e.i_plus}});
  json j{{"schema_version", 1},
         {"verdict", to_string(v.verdict)},
         {"epsilon_used", v.epsilon_used},
         {"integral_value", v.integral_value},
         {"epsilon_free_form", v.epsilon_free_form},
         {"scan", scan},
         {"diagnostic", v.diagnostic}};
  j["kappa"] = v.kappa ? json(*v.kappa) : json(nullptr);
  return j;
}

void emit(Run& run, const Options& o, const json& j) {
  if (!o.out.empty()) {
    write_text(o.out, j.dump(2) + "\n");
    run.wrote(o.out);
  }
  run.out << j.dump(2) << '\n';
}

int cmd_validate(const Options& o, Run& run) {
  const ModelSpec spec = load_model(o.model);
  const auto probes = default_probe_points(spec.domain);
  const ValidationReport rep = validate_model(spec, probes);
  json checks = json::array();
  for (const auto& c : rep.checks)
    checks.push_back({{"name", c.name}, {"passed", c.passed}, {"detail", c.detail}});
  emit(run, o, {{"schema_version", 1}, {"passed", rep.passed}, {"checks", checks},
                {"notices", rep.notices}});
  return rep.passed ? 0 : 1;
}

int cmd_density(const Options& o, Run& run) {
  const ModelSpec spec = load_model(o.model);
  const InvariantDensity p = default_density(spec);
  const auto grid = standard_grid(p);
  const double residual = adjoint_residual(spec, p, grid);
  const fs::path csv = o.out.empty() ? fs::path("density.csv") : fs::path(o.out);
  std::FILE* f = std::fopen(csv.string().c_str(), "w");
  if (!f) throw Error("cannot write " + csv.string());
  for (int i = 0; i < p.dim; ++i) std::fprintf(f, "z%d,", i + 1);
  std::fprintf(f, "p\n");
  for (const auto& z : grid) {
    for (Eigen::Index i = 0; i < z.size(); ++i) std::fprintf(f, "%.17g,", z[i]);
    std::fprintf(f, "%.17g\n", p.pdf(z));
  }
  std::fclose(f);
  run.wrote(csv);
  json j{{"schema_version", 1},
         {"provenance", to_string(p.provenance)},
         {"log_K", p.log_K},
         {"adjoint_residual", residual},
         {"bulk_lower", p.bulk_lower},
         {"bulk_upper", p.bulk_upper}};
  if (p.gaussian) {
    j["mean"] = std::vector<double>(p.gaussian->mean.data(),
                                    p.gaussian->mean.data() + p.gaussian->mean.size());
    std::vector<std::vector<double>> cov;
    for (Eigen::Index r = 0; r < p.gaussian->cov.rows(); ++r) {
      cov.emplace_back();
      for (Eigen::Index c = 0; c < p.gaussian->cov.cols(); ++c)
        cov.back().push_back(p.gaussian->cov(r, c));
    }
    j["cov"] = cov;
  }
  run.out << j.dump(2) << '\n';
  return 0;
}

int cmd_finiteness(const Options& o, Run& run) {
  const ModelSpec spec = load_model(o.model);
  const InvariantDensity p = default_density(spec);
  emit(run, o, verdict_json(check_finiteness(spec, p)));
  return 0;
}

int cmd_support(const Options& o, Run& run) {
  const ModelSpec spec = load_model(o.model);
  const SupportBounds b = support_bounds(spec);
  emit(run, o, {{"schema_version", 1},
                {"l_hat", b.l_hat},
                {"u_hat", number_or_null(b.u_hat)},
                {"u_hat_infinite", std::isinf(b.u_hat)},
                {"box_lower", b.box_lower},
                {"box_upper", b.box_upper},
                {"note", b.note}});
  return 0;
}

Marginal marginal_of(const Options& o) {
  return o.marginal < 0 ? Marginal::Perpetuity() : Marginal::Factor(o.marginal);
}

json measure_summary(const EmpiricalJointMeasure& m) {
  const auto [mean, cov] = m.moments();
  std::vector<std::vector<double>> c;
  for (Eigen::Index r = 0; r < cov.rows(); ++r) {
    c.emplace_back();
    for (Eigen::Index k = 0; k < cov.cols(); ++k) c.back().push_back(cov(r, k));
  }
  return {{"schema_version", 1},
          {"kind", to_string(m.kind())},
          {"samples", m.size()},
          {"total", m.total()},
          {"mean", std::vector<double>(mean.data(), mean.data() + mean.size())},
          {"cov", c},
          {"notes", m.notes}};
}

int cmd_reverse(const Options& o, Run& run) {
  const ModelSpec spec = load_model(o.model);
  PathConfig pc;
  pc.horizon_T = o.T;
  pc.step_delta = o.delta;
  pc.seed = o.seed;
  pc.keep_increments = !o.dump.empty();

  ReversalRequest req;
  req.method = o.method == "a" ? ReversalMethod::A : ReversalMethod::B;
  std::optional<InvariantDensity> density;
  if (req.method == ReversalMethod::A) {
    density = default_density(spec);
  } else {
    try {
      density = default_density(spec);
    } catch (const NotPositiveRecurrentError&) {
      throw;
    } catch (const Error&) {
    }
  }
  req.density = density ? &*density : nullptr;
  if (!o.z0.empty()) req.z0 = Eigen::Map<const Vector>(o.z0.data(), static_cast<Eigen::Index>(o.z0.size()));

  const fs::path csv = o.out.empty() ? fs::path("ecdf.csv") : fs::path(o.out);
  if (!o.dump.empty()) {
    ReversedPath path =
        req.method == ReversalMethod::A
            ? simulate_reversed(spec, *density, pc, {o.x})
            : reverse_from_forward(spec, pc, req.z0 ? *req.z0 : reference_point(spec), {o.x});
    write_path_dump(path, spec.noise_dim, o.dump);
    run.wrote(o.dump);
  }
  const EmpiricalJointMeasure m = estimate_reversal(spec, pc, o.x, req);
  write_ecdf_csv(m, marginal_of(o), csv);
  run.wrote(csv);
  if (!o.hist.empty()) {
    write_hist2d_csv(m.histogram(50, 50), o.hist);
    run.wrote(o.hist);
  }
  run.manifest["method"] = to_string(req.method);
  run.out << measure_summary(m).dump(2) << '\n';
  return 0;
}

int cmd_naive(const Options& o, Run& run) {
  const ModelSpec spec = load_model(o.model);
  const InvariantDensity p = default_density(spec);
  const FinitenessVerdict v = check_finiteness(spec, p);
  if (v.verdict == Finiteness::AlmostSurelyInfinite)
    throw ModelError("X0 is almost surely infinite for this model");
  PathConfig pc;
  pc.horizon_T = o.trunc_T ? *o.trunc_T : naive_truncation_horizon(v.kappa);
  pc.step_delta = o.delta;
  pc.seed = o.seed;
  pc.keep_increments = false;
  EmpiricalJointMeasure m = estimate_naive(spec, p, pc, o.paths, o.threads);
  if (v.verdict == Finiteness::Inconclusive)
    m.notes.push_back("finiteness of X0 is not established: " + v.diagnostic);
  const fs::path csv = o.out.empty() ? fs::path("ecdf.csv") : fs::path(o.out);
  write_ecdf_csv(m, marginal_of(o), csv);
  run.wrote(csv);
  run.manifest["trunc_T"] = pc.horizon_T;
  run.out << measure_summary(m).dump(2) << '\n';
  return 0;
}

PDEGrid load_grid(const Options& o, const ModelSpec& spec) {
  std::ifstream in(o.grid);
  if (!in) throw ModelError("cannot open grid file " + o.grid);
  json j;
  try {
    in >> j;
  } catch (const json::exception& e) {
    throw ModelError("malformed grid file " + o.grid + ": " + e.what());
  }
  PDEGrid g;
  g.z_lo = j.value("z_lo", g.z_lo);
  g.z_hi = j.value("z_hi", g.z_hi);
  g.nz = j.value("nz", g.nz);
  g.nx = j.value("nx", g.nx);
  if (j.contains("x_lo") && j.contains("x_hi")) {
    g.x_lo = j["x_lo"].get<double>();
    g.x_hi = j["x_hi"].get<double>();
    g.check();
    return g;
  }
  // x range from a pilot reversal run.
  PathConfig pc;
  pc.horizon_T = j.value("pilot_T", 2000.0);
  pc.step_delta = j.value("pilot_delta", 1.0 / 24.0);
  pc.seed = o.seed;
  pc.keep_increments = false;
  const InvariantDensity p = default_density(spec);
  ReversalRequest req;
  req.density = &p;
  const EmpiricalJointMeasure m = estimate_reversal(spec, pc, 1.0, req);
  return grid_from_pilot(m.perpetuity(), g.z_lo, g.z_hi, g.nz, g.nx);
}

int cmd_pde(const Options& o, Run& run) {
  const ModelSpec spec = load_model(o.model);
  const PDEGrid grid = load_grid(o, spec);
  const PDESolution sol = solve_cdf(spec, grid);
  const fs::path csv = o.out.empty() ? fs::path("g.csv") : fs::path(o.out);
  std::FILE* f = std::fopen(csv.string().c_str(), "w");
  if (!f) throw Error("cannot write " + csv.string());
  std::fprintf(f, "z,x,g\n");
  for (int i = 0; i < grid.nz; ++i)
    for (int j = 0; j < grid.nx; ++j)
      std::fprintf(f, "%.17g,%.17g,%.17g\n", grid.z(i), grid.x(j), sol.g(i, j));
  std::fclose(f);
  run.wrote(csv);
  run.manifest["lateral_condition"] = sol.lateral_condition;
  json j{{"schema_version", 1},
         {"grid", {{"z_lo", grid.z_lo}, {"z_hi", grid.z_hi}, {"x_lo", grid.x_lo},
                   {"x_hi", grid.x_hi}, {"nz", grid.nz}, {"nx", grid.nx}}},
         {"residual_norm", sol.residual_norm},
         {"refinement_sweeps", sol.iterations},
         {"lateral_condition", sol.lateral_condition},
         {"notes", sol.notes}};
  run.out << j.dump(2) << '\n';
  return 0;
}

int cmd_bench(const Options& o, Run& run) {
  json cfg_json = json::object();
  if (!o.config.empty()) {
    std::ifstream in(o.config);
    if (!in) throw ModelError("cannot open bench config " + o.config);
    try {
      in >> cfg_json;
    } catch (const json::exception& e) {
      throw ModelError("malformed bench config " + o.config + ": " + e.what());
    }
  }
  BenchConfig cfg = bench_config_from_json(cfg_json);
  if (!cfg_json.contains("threads")) cfg.threads = o.threads;
  const fs::path report = o.out.empty() ? fs::path("report.json") : fs::path(o.out);
  std::vector<fs::path> written;
  const json j = run_bench(cfg, report, &written);
  for (const auto& p : written) run.wrote(p);
  run.manifest["seed"] = cfg.base_seed;
  run.out << j.dump(2) << '\n';
  return 0;
}

}  // namespace

int dispatch(int argc, char** argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"Perpetuity laws by diffusion time reversal"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kVersion);
  Options o;

  auto common = [&](CLI::App* sub, bool needs_model, const std::string& out_help) {
    if (needs_model) sub->add_option("--model", o.model, "Model JSON file")->required();
    sub->add_option("--out", o.out, out_help);
    sub->add_option("--manifest", o.manifest, "Run manifest path (default: manifest.json next to --out)");
    sub->add_option("--threads", o.threads, "Worker threads")->check(CLI::PositiveNumber);
  };

  auto* validate = app.add_subcommand("validate", "Probe the model coefficients");
  common(validate, true, "Report JSON");
  auto* density = app.add_subcommand("invariant-density", "Invariant density of the factor");
  common(density, true, "Density CSV (z..., p)");
  auto* finite = app.add_subcommand("check-finiteness", "Decide whether X0 is a.s. finite");
  common(finite, true, "Verdict JSON");
  auto* support = app.add_subcommand("support-bounds", "Support of X0 when theta = eta = 0");
  common(support, true, "Bounds JSON");

  auto* reverse = app.add_subcommand("simulate-reverse", "One reversed path and its occupation measure");
  common(reverse, true, "ECDF CSV (point,F)");
  reverse->add_option("--method", o.method, "a: zeta_0 ~ p, b: reverse a 2T forward run")
      ->check(CLI::IsMember({"a", "b"}));
  reverse->add_option("--x", o.x, "Start value of chi")->check(CLI::PositiveNumber);
  reverse->add_option("--T", o.T, "Horizon")->check(CLI::PositiveNumber);
  reverse->add_option("--delta", o.delta, "Step (1/24 = 0.041666666666666664)")
      ->check(CLI::PositiveNumber);
  reverse->add_option("--seed", o.seed, "Seed");
  reverse->add_option("--z0", o.z0, "Method B start state");
  reverse->add_option("--marginal", o.marginal, "Factor coordinate for the ECDF (default: X)");
  reverse->add_option("--hist", o.hist, "Joint histogram CSV");
  reverse->add_option("--dump", o.dump, "Binary path dump");

  auto* naive = app.add_subcommand("simulate-naive", "Independent truncated forward paths");
  common(naive, true, "ECDF CSV (point,F)");
  naive->add_option("--paths", o.paths, "Number of paths")->check(CLI::PositiveNumber);
  naive->add_option("--trunc-T", o.trunc_T, "Truncation horizon (default max(100, 20/kappa))");
  naive->add_option("--delta", o.delta, "Step")->check(CLI::PositiveNumber);
  naive->add_option("--seed", o.seed, "Seed");
  naive->add_option("--marginal", o.marginal, "Factor coordinate for the ECDF (default: X)");

  auto* pde = app.add_subcommand("pde-solve", "Conditional CDF of X0 given Z0 by finite differences");
  common(pde, true, "CSV (z,x,g)");
  pde->add_option("--grid", o.grid, "Grid JSON")->required();
  pde->add_option("--seed", o.seed, "Seed of the pilot run");

  auto* bench = app.add_subcommand("bench", "KS benchmark of the reversal and naive estimators");
  common(bench, false, "Report JSON");
  bench->add_option("--config", o.config, "Bench config JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::Success& e) {
    return app.exit(e, out, err);
  } catch (const CLI::ParseError& e) {
    err << e.what() << "\n\n" << app.help();
    return 2;
  }

  CLI::App* sub = app.get_subcommands().front();
  fs::path manifest_path = o.manifest;
  if (manifest_path.empty())
    manifest_path = (o.out.empty() ? fs::path(".") : fs::path(o.out).parent_path()) / "manifest.json";

  Run run{json::object(), {}, out};
  run.manifest["schema_version"] = 1;
  run.manifest["subcommand"] = sub->get_name();
  run.manifest["version"] = kVersion;
  run.manifest["config_paths"] = json::array();
  for (const auto& p : {o.model, o.grid, o.config})
    if (!p.empty()) run.manifest["config_paths"].push_back(p);
  run.manifest["seed"] = o.seed;
  run.manifest["threads"] = o.threads;
  run.manifest["start"] = utc_now();
  const auto t0 = std::chrono::steady_clock::now();

  static const std::map<std::string, std::function<int(const Options&, Run&)>> handlers = {
      {"validate", cmd_validate},       {"invariant-density", cmd_density},
      {"check-finiteness", cmd_finiteness}, {"support-bounds", cmd_support},
      {"simulate-reverse", cmd_reverse}, {"simulate-naive", cmd_naive},
      {"pde-solve", cmd_pde},           {"bench", cmd_bench}};

  int code = 0;
  try {
    code = handlers.at(sub->get_name())(o, run);
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    run.manifest["error"] = e.what();
    code = 1;
  }
  run.manifest["end"] = utc_now();
  run.manifest["elapsed_seconds"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  run.manifest["exit_code"] = code;
  json outs = json::array();
  for (const auto& p : run.outputs) outs.push_back(p.string());
  run.manifest["outputs"] = outs;
  try {
    write_text(manifest_path, run.manifest.dump(2) + "\n");
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    if (code == 0) code = 1;
  }
  return code;
}

}  // namespace perpetuity
