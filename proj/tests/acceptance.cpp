// Acceptance checks. Prints one PASS/FAIL line per criterion and exits
// nonzero if any criterion fails, except those listed as known failures
// (reported as FAIL with the reason; see README).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "ciest/analysis.hpp"
#include "ciest/commands.hpp"
#include "ciest/report.hpp"
#include "ciest/scenario.hpp"
#include "oracles/oracles.hpp"

using namespace ciest;
namespace fs = std::filesystem;

namespace {

const std::string kScenarios = CIEST_SCENARIO_DIR;

struct Outcome {
  bool passed;
  std::string detail;
  bool known_failure = false;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string num(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

struct Loaded {
  ScenarioConfig config;
  Problem problem;
  RunOptions options;
  std::vector<std::uint64_t> seeds;
};

Loaded load(const std::string& file) {
  auto config = load_scenario(kScenarios + "/" + file);
  validate_scenario(config, config.run.algorithm).require_ok();
  Loaded l{config, build_problem(config, config.run.algorithm), {}, {}};
  l.options.algorithm = config.run.algorithm;
  l.options.iterations = config.run.iterations;
  l.options.stride = config.run.stride;
  l.options.record_estimates = config.run.record_estimates;
  for (auto s = config.run.seed_first; s <= config.run.seed_last; ++s) l.seeds.push_back(s);
  return l;
}

// C1
Outcome scalar_closed_form() {
  const auto dir = fs::temp_directory_path() / "ciest_acceptance_c1";
  fs::create_directories(dir);
  std::ostringstream out, err;
  const auto t0 = std::chrono::steady_clock::now();
  const int code = cmd_variance({kScenarios + "/scalar_tuned.json", (dir / "v.json").string(), false}, out, err);
  const double elapsed = seconds_since(t0);
  if (code != kExitOk) return {false, "variance command failed: " + err.str()};
  const auto rep = read_json(dir / "v.json");
  fs::remove_all(dir);
  const double reported = rep["trace_over_n"].get<double>();

  // (a^2 sigma^2 h^2 / N) sum_n 1/(2 a b lambda_n + 2 a h^2 - 1), complete graph: lambda = 0, N (x9)
  const double N = 10, a = 1, b = 1e4, h = 1, sigma = 1;
  double sum = 1.0 / (2 * a * h * h - 1);
  for (int k = 0; k < 9; ++k) sum += 1.0 / (2 * a * b * N + 2 * a * h * h - 1);
  const double explicit_sum = a * a * sigma * sigma * h * h / N * sum;
  const double star = sigma * sigma / (N * h * h);
  const auto& ex = rep["scalar_example"];
  const bool star_equal = ex["s_lu_star"].get<double>() == ex["s_c"].get<double>();
  const double rel = std::abs(reported - explicit_sum) / explicit_sum;
  const double off = std::abs(reported - star) / star;
  const bool ok = rel <= 1e-10 && off < 0.01 && star_equal && elapsed < 1.0;
  return {ok, "Tr(S)/N=" + num(reported) + " explicit=" + num(explicit_sum) + " rel=" + num(rel) +
                  " vs S*=" + num(off * 100) + "% S*==S_c:" + (star_equal ? "yes" : "no") + " t=" + num(elapsed) + "s"};
}

// C2
Outcome lyapunov_vs_quadrature() {
  const auto t0 = std::chrono::steady_clock::now();
  RngStream rng = make_stream(2024, "acceptance-c2");
  auto uni = [&](double lo, double hi) { return lo + (hi - lo) * uniform01(rng); };
  auto pick = [&](std::size_t lo, std::size_t hi) {
    return lo + static_cast<std::size_t>(uniform01(rng) * static_cast<double>(hi - lo + 1));
  };
  double worst = 0.0;
  int built = 0;
  while (built < 20) {
    const std::size_t N = pick(2, 6), M = pick(1, 3);
    // random spanning tree plus extra edges
    std::vector<Edge> edges;
    for (std::size_t v = 1; v < N; ++v) edges.emplace_back(pick(0, v - 1), v);
    for (std::size_t x = 0; x < N; ++x)
      for (std::size_t y = x + 1; y < N; ++y)
        if (uniform01(rng) < 0.3 && std::find(edges.begin(), edges.end(), Edge{x, y}) == edges.end())
          edges.emplace_back(x, y);
    auto base = LaplacianMatrix::from_edges(N, edges);
    auto net = uniform01(rng) < 0.5 ? LinkFailureModel::erasure(base, uni(0.0, 0.5)) : LinkFailureModel::fixed(base);

    std::vector<Eigen::MatrixXd> H;
    std::size_t obs = 0;
    for (std::size_t n = 0; n < N; ++n) {
      Eigen::MatrixXd h(static_cast<Eigen::Index>(pick(1, M)), static_cast<Eigen::Index>(M));
      for (auto& v : h.reshaped()) v = uni(-1.5, 1.5);
      obs += static_cast<std::size_t>(h.rows());
      H.push_back(h);
    }
    Eigen::MatrixXd W(static_cast<Eigen::Index>(obs), static_cast<Eigen::Index>(obs));
    for (auto& v : W.reshaped()) v = uni(-1.0, 1.0);
    Eigen::MatrixXd cov = W * W.transpose() / static_cast<double>(obs) +
                          0.1 * Eigen::MatrixXd::Identity(static_cast<Eigen::Index>(obs), static_cast<Eigen::Index>(obs));
    LinearModel model(M, H, cov);
    if (!check_observability(model).full_rank) continue;
    if (uniform01(rng) < 0.5) {
      std::vector<Eigen::MatrixXd> stds;
      for (const auto& h : H) stds.push_back(Eigen::MatrixXd::Constant(h.rows(), h.cols(), uni(0.0, 0.3)));
      model.with_matrix_noise_std(stds);
    }
    Eigen::VectorXd theta(static_cast<Eigen::Index>(M));
    for (auto& v : theta) v = uni(-2.0, 2.0);
    QuantizerSpec q{uniform01(rng) < 0.5, uni(0.05, 0.5), true};
    const double b = uni(0.5, 3.0);
    const double lmin = check_lu_gain_matrix(b, mean_laplacian(net), model).lambda_min;
    const double a = uni(1.2, 3.0) / (2.0 * lmin);

    const auto rep = asymptotic_variance(a, b, net, model, theta, q);
    const Eigen::MatrixXd Q = oracle::lyapunov_quadrature(rep.sigma, rep.s0, a);
    worst = std::max(worst, (rep.s - Q).norm() / Q.norm());
    ++built;
  }
  const double elapsed = seconds_since(t0);
  return {worst < 1e-6 && elapsed < 30.0,
          "20 instances, worst relative Frobenius " + num(worst) + ", t=" + num(elapsed) + "s"};
}

// C3
Outcome lu_normality() {
  const auto t0 = std::chrono::steady_clock::now();
  auto l = load("scalar.json");
  l.options.stride = l.options.iterations;  // only the first and final rows matter here
  l.options.record_estimates = true;
  std::vector<std::uint64_t> seeds;
  for (std::uint64_t s = 0; s < 1000; ++s) seeds.push_back(s);
  const auto traces = run_trials(l.problem, l.options, seeds);
  const auto& lin = std::get<LinearModel>(l.problem.model);
  const auto var = asymptotic_variance(l.problem.alpha.scale, l.problem.consensus_weight, l.problem.network, lin,
                                       l.problem.theta, l.problem.quantizer);
  DiagnosticsRequest req;
  req.normality = true;
  req.reference_blocks = var.sensor_blocks;
  const auto diag = mc_diagnostics(traces, l.problem.theta, req);
  double lo = 1e300, hi = 0.0;
  for (const auto& c : diag.normality->empirical) {
    lo = std::min(lo, c(0, 0));
    hi = std::max(hi, c(0, 0));
  }
  const double dev = diag.normality->max_relative_frobenius;
  return {dev < 0.2 && diag.consistency->diverged == 0,
          "S_nn=" + num(var.sensor_blocks[0](0, 0)) + " empirical in [" + num(lo) + ", " + num(hi) +
              "], max deviation " + num(100 * dev) + "%, t=" + num(seconds_since(t0)) + "s"};
}

struct FailureRun {
  double median_final = 0.0;
};

// C4 (the dithered median feeds C10)
Outcome lu_consistency(FailureRun& dithered) {
  const auto t0 = std::chrono::steady_clock::now();
  auto l = load("partial_ring_erasure.json");
  const auto traces = run_trials(l.problem, l.options, l.seeds);
  DiagnosticsRequest req;
  req.mse = req.consensus = false;
  const auto c = *mc_diagnostics(traces, l.problem.theta, req).consistency;
  dithered.median_final = c.median_final_error;
  return {c.trials == 100 && c.diverged == 0 && c.median_ratio < 0.1,
          std::to_string(c.trials) + " trials, " + std::to_string(c.diverged) + " diverged, median final/initial " +
              num(c.median_ratio) + " (final " + num(c.median_final_error) + " from " + num(c.median_initial_error) +
              "), t=" + num(seconds_since(t0)) + "s"};
}

// C5
Outcome dither_statistics() {
  const auto t0 = std::chrono::steady_clock::now();
  const double step = 0.1;
  const std::size_t n = 1000000;
  std::vector<double> y(n, 0.3721);
  RngStream rng = make_stream(5, "acceptance-c5");
  const auto s = dithered_quantize(y, QuantizerSpec{true, step, true}, rng);
  double mean = 0.0;
  for (double e : s.error) mean += e;
  mean /= static_cast<double>(n);
  double var = 0.0;
  for (double e : s.error) var += (e - mean) * (e - mean);
  var /= static_cast<double>(n - 1);
  const double se = std::sqrt(var / static_cast<double>(n));
  const double ks = oracle::ks_uniform(s.error, -step / 2, step / 2);
  const double crit = oracle::ks_critical_1pct(n);

  // aggregate noise on a complete 4-node graph, M = 2, step 0.5, random inputs
  const std::size_t N = 4, M = 2;
  const double big = 0.5;
  auto base = LaplacianMatrix::from_edges(N, topology_edges(Topology::complete, N));
  NeighborExchange ex(base, M, QuantizerSpec{true, big, true}, 5);
  Eigen::VectorXd v(N * M), c(N * M);
  std::vector<LinkExchange> audit;
  double moment = 0.0;
  const int draws = 100000;
  for (int k = 0; k < draws; ++k) {
    for (auto& x : v) x = uniform_symmetric(rng, 10.0);
    ex.consensus_term(base, {v.data(), N * M}, {c.data(), N * M}, &audit);
    const auto agg = aggregate_quant_noise(base, M, audit);
    moment += (agg.upsilon + agg.psi).squaredNorm();
  }
  moment /= draws;
  const double bound = quant_noise_second_moment_bound(N, M, big);

  const bool ok = std::abs(mean) < 4 * se && std::abs(var / (step * step / 12) - 1) < 0.05 && ks < crit &&
                  moment <= bound;
  return {ok, "mean " + num(mean / se) + " SE, var/(step^2/12)=" + num(var / (step * step / 12)) + ", KS " + num(ks) +
                  " < " + num(crit) + ", E||upsilon+psi||^2=" + num(moment) + " <= " + num(bound) +
                  ", t=" + num(seconds_since(t0)) + "s"};
}

// C6
Outcome unbiasedness_envelope() {
  auto L = LaplacianMatrix::from_edges(6, topology_edges(Topology::ring, 6));
  auto net = LinkFailureModel::erasure(L, 0.3);
  auto model = partial_observation_model(6, 3, 1.0);
  Eigen::VectorXd theta(3);
  theta << 1.0, -0.5, 2.0;
  Eigen::VectorXd x0 = Eigen::VectorXd::LinSpaced(18, -4.0, 4.0);
  const auto env = expectation_envelope(WeightSchedule(3.0, 1.0), 2.0, mean_laplacian(net), model, theta, x0, 100000, 1);
  return {env.passed && env.lyapunov_decreasing,
          std::to_string(env.iters.size()) + " iterates from i0=" + std::to_string(env.start_index) +
              ", worst error/envelope " + num(env.worst_ratio) + ", Lyapunov non-increasing: " +
              (env.lyapunov_decreasing ? "yes" : "no")};
}

// C7
Outcome nlu_cubic() {
  const auto t0 = std::chrono::steady_clock::now();
  auto l = load("cubic_nlu.json");
  const auto traces = run_trials(l.problem, l.options, l.seeds);
  std::vector<double> t_early, t_late, g_early, g_late, x_late;
  std::size_t diverged = 0;
  for (const auto& t : traces) {
    if (t.divergence) {
      ++diverged;
      continue;
    }
    for (const auto& r : t.rows) {
      if (r.iter == 100) {
        t_early.push_back(r.transformed_err);
        g_early.push_back(r.consensus_gap);
      }
    }
    t_late.push_back(t.rows.back().transformed_err);
    g_late.push_back(t.rows.back().consensus_gap);
    x_late.push_back(t.max_error(t.rows.back()));
  }
  if (diverged || t_early.size() != traces.size()) return {false, std::to_string(diverged) + " trials diverged"};
  const double tr = quantile(t_early, 0.5) / quantile(t_late, 0.5);
  const double gr = quantile(g_early, 0.5) / quantile(g_late, 0.5);
  const double x_med = quantile(x_late, 0.5), x_p90 = quantile(x_late, 0.9);
  const bool ok = tr >= 100 && gr >= 100 && x_p90 < 1e-2;
  return {ok, "median transformed error shrink " + num(tr) + "x, consensus gap shrink " + num(gr) +
                  "x, final |x-theta| median " + num(x_med) + " p90 " + num(x_p90) + ", t=" + num(seconds_since(t0)) + "s"};
}

// C8
Outcome nu_linear_equivalence() {
  auto base = LaplacianMatrix::from_edges(4, topology_edges(Topology::ring, 4));
  Problem p{LinkFailureModel::erasure(base, 0.25),
            partial_observation_model(4, 2, 0.7),
            QuantizerSpec{true, 0.05, true},
            WeightSchedule(0.6, 1.0),
            std::nullopt,
            1.5,
            (Eigen::VectorXd(2) << 0.8, -1.9).finished(),
            Eigen::VectorXd::LinSpaced(8, -1.0, 1.0)};
  RunOptions lu{Algorithm::lu, 100, 1, true, false};
  RunOptions nu = lu;
  nu.algorithm = Algorithm::nu;
  const auto a = run_trial(p, lu, 77), b = run_trial(p, nu, 77);
  bool same = a.rows.size() == 101 && a.rows.size() == b.rows.size();
  for (std::size_t k = 0; same && k < a.rows.size(); ++k)
    same = std::memcmp(a.rows[k].estimates.data(), b.rows[k].estimates.data(), 8 * sizeof(double)) == 0;
  return {same, same ? "100 iterations, identical bits at every iterate" : "estimates differ"};
}

// C9
Outcome tail_sums() {
  const auto t0 = std::chrono::steady_clock::now();
  const WeightSchedule v1(1.0, 0.6), v2(1.0, 0.9);
  const double vanishing = weighted_tail_sum(v1, v2, 50, 1000000);
  // the recursion settles near r2/r1 = (i+1)^-0.3; find where it drops below 1e-2
  std::vector<std::uint64_t> at;
  for (std::uint64_t i = 1000000; i <= 20000000; i += 100000) at.push_back(i);
  const auto longer = weighted_tail_sum_series(v1, v2, 50, at);
  std::uint64_t reached = 0;
  for (std::size_t k = 0; k < at.size() && !reached; ++k)
    if (longer[k] < 1e-2) reached = at[k];

  const WeightSchedule b1(1.0, 0.75), b2(1.0, 0.75);
  const double bound = tail_sum_bound(b1, b2);
  double worst = 0.0;
  for (std::uint64_t j : {0ull, 1ull, 10ull, 100ull, 1000ull, 10000ull, 100000ull}) {
    std::vector<std::uint64_t> pts;
    for (std::uint64_t i = j; i <= 1000000; ++i) pts.push_back(i);
    for (double v : weighted_tail_sum_series(b1, b2, j, pts)) worst = std::max(worst, v);
  }
  const bool bounded_ok = worst <= bound;
  const bool vanishing_ok = vanishing < 1e-2;
  Outcome o{bounded_ok && vanishing_ok,
            "vanishing branch " + num(vanishing) + " at i=1e6 (target < 1e-2; first below at i~" +
                (reached ? std::to_string(reached) : std::string(">2e7")) + "), bounded branch max " + num(worst) +
                " <= " + num(bound) + ", t=" + num(seconds_since(t0)) + "s"};
  // (i+1)^-(0.9-0.6) at i = 1e6 is 0.0158, so the 1e-2 target cannot be met at that i.
  o.known_failure = bounded_ok && !vanishing_ok;
  return o;
}

// C10
Outcome undithered_failure(const FailureRun& dithered) {
  const auto t0 = std::chrono::steady_clock::now();
  auto l = load("partial_ring_undithered.json");
  const auto traces = run_trials(l.problem, l.options, l.seeds);
  DiagnosticsRequest req;
  req.mse = req.consensus = false;
  const auto c = *mc_diagnostics(traces, l.problem.theta, req).consistency;
  const double factor = c.median_final_error / dithered.median_final;
  const bool ok = c.diverged > 0 || factor >= 10.0;
  return {ok, std::to_string(c.diverged) + " diverged, median final error " + num(c.median_final_error) + " = " +
                  num(factor) + "x the dithered median " + num(dithered.median_final) + ", t=" +
                  num(seconds_since(t0)) + "s"};
}

}  // namespace

int main() {
  FailureRun dithered;
  std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
      {"C1 scalar closed form", scalar_closed_form},
      {"C2 Lyapunov vs quadrature", lyapunov_vs_quadrature},
      {"C3 LU asymptotic normality", lu_normality},
      {"C4 LU consistency with failures and quantization", [&] { return lu_consistency(dithered); }},
      {"C5 dither statistics", dither_statistics},
      {"C6 unbiasedness envelope", unbiasedness_envelope},
      {"C7 NLU on the cubic model", nlu_cubic},
      {"C8 NU/LU linear equivalence", nu_linear_equivalence},
      {"C9 tail-sum lemma", tail_sums},
      {"C10 undithered failure", [&] { return undithered_failure(dithered); }},
  };
  int unexpected = 0;
  for (const auto& [name, check] : criteria) {
    Outcome o;
    try {
      o = check();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    std::printf("%s %s: %s%s\n", o.passed ? "PASS" : "FAIL", name.c_str(), o.detail.c_str(),
                o.known_failure ? " [known failure, see README]" : "");
    std::fflush(stdout);
    if (!o.passed && !o.known_failure) ++unexpected;
  }
  return unexpected == 0 ? 0 : 1;
}
