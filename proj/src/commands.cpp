#include "ciest/commands.hpp"

#include <cmath>
#include <filesystem>
#include <functional>

#include "ciest/analysis.hpp"
#include "ciest/error.hpp"
#include "ciest/report.hpp"
#include "ciest/runner.hpp"
#include "ciest/scenario.hpp"

namespace ciest {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

int guarded(std::ostream& err, const std::function<int()>& body) {
  try {
    return body();
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const DivergenceError& e) {
    err << "error: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const IoError& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const fs::filesystem_error& e) {
    err << "error: " << e.what() << '\n';
    return kExitIo;
  } catch (const InvalidArgument& e) {
    err << "error: " << e.what() << '\n';
    return kExitValidation;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
}

void print_issues(std::ostream& os, const char* kind, const std::vector<ValidationIssue>& issues) {
  for (const auto& i : issues) os << kind << " [" << i.code << "] " << i.message << '\n';
}

json issues_json(const std::vector<ValidationIssue>& issues) {
  json a = json::array();
  for (const auto& i : issues) a.push_back({{"code", i.code}, {"message", i.message}});
  return a;
}

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());
}

void ensure_parent(const fs::path& file) {
  if (file.has_parent_path()) ensure_dir(file.parent_path());
}

/// Identical scalar sensors with iid noise and no quantization or matrix noise.
struct ScalarShape {
  double h, sigma;
};
std::optional<ScalarShape> scalar_shape(const LinearModel& m, const QuantizerSpec& q) {
  if (m.param_dim() != 1 || m.has_matrix_noise() || q.enabled) return std::nullopt;
  const double h = m.mean_matrix(0)(0, 0);
  for (std::size_t n = 0; n < m.n_sensors(); ++n)
    if (m.sensor_dim(n) != 1 || m.mean_matrix(n)(0, 0) != h) return std::nullopt;
  const auto& S = m.noise_cov();
  const double var = S(0, 0);
  if (!(S - var * Eigen::MatrixXd::Identity(S.rows(), S.cols())).isZero(0.0)) return std::nullopt;
  return ScalarShape{h, std::sqrt(var)};
}

std::vector<std::uint64_t> seed_list(std::uint64_t first, std::uint64_t last) {
  std::vector<std::uint64_t> s;
  for (std::uint64_t k = first; k <= last; ++k) s.push_back(k);
  return s;
}

}  // namespace

std::pair<std::uint64_t, std::uint64_t> parse_seed_range(const std::string& text) {
  auto parse = [&](const std::string& s) -> std::uint64_t {
    if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
      throw InvalidArgument("bad seed range '" + text + "' (expected s0..s1)");
    return std::stoull(s);
  };
  const auto dots = text.find("..");
  if (dots == std::string::npos) {
    const auto s = parse(text);
    return {s, s};
  }
  const auto a = parse(text.substr(0, dots));
  const auto b = parse(text.substr(dots + 2));
  if (b < a) throw InvalidArgument("seed range '" + text + "' is descending");
  return {a, b};
}

int cmd_validate(const ValidateArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const ScenarioConfig config = load_scenario(args.scenario);
    const Algorithm algo = args.algorithm.value_or(config.run.algorithm);
    const ScenarioCheck check = validate_scenario(config, algo);
    print_issues(err, "warning", check.warnings);
    print_issues(err, "error", check.errors);
    std::vector<std::pair<std::string, std::string>> rows{
        {"scenario", config.name.empty() ? args.scenario : config.name},
        {"digest", scenario_digest(config)},
        {"algorithm", algorithm_name(algo)},
        {"lambda_2(mean Laplacian)", fmt(check.lambda2)}};
    if (check.gain_lambda_min) rows.emplace_back("lambda_min(gain matrix)", fmt(*check.gain_lambda_min));
    if (check.nu_beta_threshold) rows.emplace_back("nu beta threshold", fmt(*check.nu_beta_threshold));
    rows.emplace_back("verdict", check.ok() ? "valid" : "invalid");
    out << summary_table(rows);
    return check.ok() ? kExitOk : kExitValidation;
  });
}

int cmd_run(const RunArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    ScenarioConfig config = load_scenario(args.scenario);
    if (args.algorithm) config.run.algorithm = *args.algorithm;
    if (args.iterations) config.run.iterations = *args.iterations;
    if (args.seeds) std::tie(config.run.seed_first, config.run.seed_last) = *args.seeds;
    if (args.stride) config.run.stride = *args.stride;
    if (args.record_estimates) config.run.record_estimates = *args.record_estimates;
    const Algorithm algo = config.run.algorithm;

    const ScenarioCheck check = validate_scenario(config, algo);
    print_issues(err, "warning", check.warnings);
    check.require_ok();

    const Problem problem = build_problem(config, algo);
    const std::string digest = scenario_digest(config);
    RunOptions opt;
    opt.algorithm = algo;
    opt.iterations = config.run.iterations;
    opt.stride = config.run.stride;
    opt.record_estimates = config.run.record_estimates;
    opt.check_average = args.check_average;
    const auto seeds = seed_list(config.run.seed_first, config.run.seed_last);
    const auto traces = run_trials(problem, opt, seeds, digest, args.threads);

    const fs::path dir(args.out);
    ensure_dir(dir);
    json trials = json::array();
    std::size_t diverged = 0;
    for (const auto& t : traces) {
      write_trace_csv(t, dir / trace_file_name(t.seed));
      json entry = {{"seed", t.seed}, {"file", trace_file_name(t.seed)}, {"diverged", bool(t.divergence)}};
      if (t.divergence) {
        ++diverged;
        entry["divergence_iteration"] = t.divergence->iteration;
        entry["divergence_message"] = t.divergence->message;
        err << "seed " << t.seed << ": " << t.divergence->message << '\n';
      }
      trials.push_back(entry);
    }
    json manifest = {{"digest", digest},
                     {"scenario", serialize_scenario(config)},
                     {"algorithm", algorithm_name(algo)},
                     {"iterations", opt.iterations},
                     {"stride", opt.stride},
                     {"seeds", seeds},
                     {"n_sensors", problem.n_sensors()},
                     {"param_dim", problem.param_dim()},
                     {"columns", trace_columns(algo, problem.n_sensors(), problem.param_dim(), opt.record_estimates)},
                     {"trials", trials},
                     {"warnings", issues_json(check.warnings)},
                     {"versions", version_info()}};
    write_text(dir / "manifest.json", manifest.dump(2) + "\n");

    DiagnosticsRequest req;
    req.mse = false;
    req.consensus = false;
    const auto diag = mc_diagnostics(traces, problem.theta, req);
    out << summary_table({{"digest", digest},
                          {"algorithm", algorithm_name(algo)},
                          {"trials", std::to_string(traces.size())},
                          {"diverged", std::to_string(diverged)},
                          {"median initial max error", fmt(diag.consistency->median_initial_error)},
                          {"median final max error", fmt(diag.consistency->median_final_error)},
                          {"median final/initial", fmt(diag.consistency->median_ratio)}});
    return diverged ? kExitDivergence : kExitOk;
  });
}

int cmd_analyze(const AnalyzeArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const fs::path dir(args.runs);
    const json manifest = read_json(dir / "manifest.json");
    DiagnosticsRequest req{false, false, false, false, {}};
    for (const auto& r : args.reports) {
      if (r == "consistency") req.consistency = true;
      else if (r == "mse") req.mse = true;
      else if (r == "consensus") req.consensus = true;
      else if (r == "normality") req.normality = true;
      else throw InvalidArgument("unknown report '" + r + "' (consistency|mse|consensus|normality)");
    }

    json report = {{"digest", manifest.value("digest", "")}, {"reports", args.reports}};
    const auto& trials = manifest.at("trials");
    if (trials.empty()) {
      report["trials"] = 0;
      report["diagnostics"] = json::object();
      ensure_parent(args.out);
      write_text(args.out, report.dump(2) + "\n");
      out << summary_table({});
      return kExitOk;
    }

    const ScenarioConfig config = parse_scenario(manifest.at("scenario").dump());
    const Algorithm algo = parse_algorithm(manifest.at("algorithm").get<std::string>());
    const auto N = manifest.at("n_sensors").get<std::size_t>();
    const auto M = manifest.at("param_dim").get<std::size_t>();
    std::vector<Trace> traces;
    for (const auto& t : trials) {
      Trace tr = read_trace_csv(dir / t.at("file").get<std::string>(), algo, N, M, t.at("seed").get<std::uint64_t>());
      if (t.value("diverged", false))
        tr.divergence = Divergence{t.value("divergence_iteration", std::uint64_t{0}), t.value("divergence_message", "")};
      traces.push_back(std::move(tr));
    }

    if (req.normality && algo == Algorithm::lu && config.alpha.tau == 1.0) {
      try {
        const auto network = build_network(config);
        const auto model = build_model(config);
        const auto var = asymptotic_variance(config.alpha.a, config.b, network, std::get<LinearModel>(model),
                                             config.theta, config.quantizer);
        req.reference_blocks = var.sensor_blocks;
      } catch (const std::exception& e) {
        err << "note: no closed-form reference covariance: " << e.what() << '\n';
      }
    }

    const auto diag = mc_diagnostics(traces, config.theta, req);
    report["trials"] = traces.size();
    report["diagnostics"] = diagnostics_json(diag);
    if (!req.reference_blocks.empty()) {
      json blocks = json::array();
      for (const auto& b : req.reference_blocks) blocks.push_back(matrix_to_json(b));
      report["reference_blocks"] = blocks;
    }
    ensure_parent(args.out);
    write_text(args.out, report.dump(2) + "\n");

    std::vector<std::pair<std::string, std::string>> rows{{"trials", std::to_string(traces.size())}};
    if (diag.consistency) {
      rows.emplace_back("diverged", std::to_string(diag.consistency->diverged));
      rows.emplace_back("median final max error", fmt(diag.consistency->median_final_error));
      rows.emplace_back("median final/initial", fmt(diag.consistency->median_ratio));
      rows.emplace_back("p90 final/initial", fmt(diag.consistency->p90_ratio));
    }
    if (diag.mse) rows.emplace_back("mse slope (final decade)", fmt(diag.mse->slope_final_decade));
    if (diag.consensus) rows.emplace_back("median final consensus gap", fmt(diag.consensus->final_q50));
    if (diag.normality) {
      rows.emplace_back("normality iteration", std::to_string(diag.normality->iteration));
      rows.emplace_back("normality degenerate", diag.normality->degenerate ? "yes" : "no");
      if (!diag.normality->relative_frobenius.empty())
        rows.emplace_back("max rel. deviation from S_nn", fmt(diag.normality->max_relative_frobenius));
    }
    out << summary_table(rows);
    return kExitOk;
  });
}

int cmd_variance(const VarianceArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    const ScenarioConfig config = load_scenario(args.scenario);
    const ScenarioCheck check = validate_scenario(config, Algorithm::lu);
    print_issues(err, "warning", check.warnings);
    check.require_ok();
    if (config.alpha.tau != 1.0)
      throw ValidationError("normality-exponent", "the asymptotic covariance needs step exponent 1, got " +
                                                      std::to_string(config.alpha.tau));
    const auto network = build_network(config);
    const auto model = std::get<LinearModel>(build_model(config));
    AsymptoticVarianceOptions opt;
    opt.allow_unstable = args.allow_unstable;
    const auto rep = asymptotic_variance(config.alpha.a, config.b, network, model, config.theta, config.quantizer, opt);

    json doc = variance_json(rep);
    doc["digest"] = scenario_digest(config);
    doc["a"] = config.alpha.a;
    doc["b"] = config.b;
    std::vector<std::pair<std::string, std::string>> rows{{"stability margin", fmt(rep.stability_margin)},
                                                          {"Lyapunov residual", fmt(rep.lyapunov_residual)},
                                                          {"Tr(S)/N", fmt(rep.trace_over_n)}};
    const auto shape = scalar_shape(model, config.quantizer);
    if (shape && config.alpha.a > 1.0 / (2.0 * shape->h * shape->h)) {
      const auto s = scalar_example_summary(model.n_sensors(), shape->h, shape->sigma, config.alpha.a, config.b,
                                            mean_laplacian(network));
      doc["scalar_example"] = {{"s_lu", s.s_lu},
                               {"s_lu_star", s.s_lu_star},
                               {"s_c", s.s_c},
                               {"relative_gap_to_trace", std::abs(rep.trace_over_n - s.s_lu) / s.s_lu}};
      rows.emplace_back("S_LU (closed form)", fmt(s.s_lu));
      rows.emplace_back("S_LU_star", fmt(s.s_lu_star));
      rows.emplace_back("S_c", fmt(s.s_c));
    }
    ensure_parent(args.out);
    write_text(args.out, doc.dump(2) + "\n");
    out << summary_table(rows);
    return kExitOk;
  });
}

int cmd_reproduce_2_4(const ReproduceArgs& args, std::ostream& out, std::ostream& err) {
  return guarded(err, [&] {
    if (args.seeds == 0) throw InvalidArgument("need at least one seed");
    constexpr std::size_t N = 10;
    constexpr double h = 1.0, sigma = 1.0, theta = 1.0;
    const auto network = LinkFailureModel::fixed(LaplacianMatrix::from_edges(N, topology_edges(Topology::complete, N)));
    const auto Lbar = mean_laplacian(network);
    const LinearModel model = scalar_network_model(N, h, sigma);
    const Eigen::VectorXd th = Eigen::VectorXd::Constant(1, theta);

    // Closed forms: near-optimal weights (a = 1/h^2, large b) and the simulated weights (a = b = 1).
    const auto tuned = scalar_example_summary(N, h, sigma, 1.0 / (h * h), 1e4, Lbar);
    const auto tuned_var = asymptotic_variance(1.0 / (h * h), 1e4, network, model, th, QuantizerSpec{});
    const auto sim = scalar_example_summary(N, h, sigma, 1.0, 1.0, Lbar);
    const auto sim_var = asymptotic_variance(1.0, 1.0, network, model, th, QuantizerSpec{});

    Problem problem{network, model, QuantizerSpec{}, WeightSchedule(1.0, 1.0), std::nullopt, 1.0, th, {}};
    RunOptions opt;
    opt.algorithm = Algorithm::lu;
    opt.iterations = args.iterations;
    opt.stride = std::max<std::uint64_t>(1, args.iterations);
    opt.record_estimates = true;
    const auto traces = run_trials(problem, opt, seed_list(0, args.seeds - 1), "", args.threads);

    DiagnosticsRequest req{true, false, false, traces.size() >= kMinNormalityTraces, sim_var.sensor_blocks};
    const auto diag = mc_diagnostics(traces, th, req);

    json doc = {{"n_sensors", N},
                {"h", h},
                {"sigma", sigma},
                {"tuned", {{"a", 1.0}, {"b", 1e4}, {"s_lu", tuned.s_lu}, {"s_lu_star", tuned.s_lu_star},
                           {"s_c", tuned.s_c}, {"trace_over_n", tuned_var.trace_over_n}}},
                {"simulated", {{"a", 1.0}, {"b", 1.0}, {"s_lu", sim.s_lu}, {"trace_over_n", sim_var.trace_over_n},
                               {"seeds", args.seeds}, {"iterations", args.iterations}}},
                {"diagnostics", diagnostics_json(diag)},
                {"versions", version_info()}};
    std::vector<std::pair<std::string, std::string>> rows{
        {"S_LU (a=1, b=1e4)", fmt(tuned.s_lu)},
        {"S_LU_star", fmt(tuned.s_lu_star)},
        {"S_c", fmt(tuned.s_c)},
        {"S_nn closed form (a=1, b=1)", fmt(sim.s_lu)}};
    if (diag.normality) {
      double mean_var = 0.0;
      for (const auto& c : diag.normality->empirical) mean_var += c(0, 0);
      mean_var /= static_cast<double>(diag.normality->empirical.size());
      doc["simulated"]["empirical_variance"] = mean_var;
      doc["simulated"]["max_relative_deviation"] = diag.normality->max_relative_frobenius;
      rows.emplace_back("empirical var sqrt(i)(x_n - theta)", fmt(mean_var));
      rows.emplace_back("max per-sensor rel. deviation", fmt(diag.normality->max_relative_frobenius));
    }
    rows.emplace_back("trials (diverged)", std::to_string(traces.size()) + " (" +
                                              std::to_string(diag.consistency->diverged) + ")");
    const std::string table = summary_table(rows);
    const fs::path dir(args.out);
    ensure_dir(dir);
    write_text(dir / "report.json", doc.dump(2) + "\n");
    write_text(dir / "summary.txt", table);
    out << table;
    return kExitOk;
  });
}

}  // namespace ciest
