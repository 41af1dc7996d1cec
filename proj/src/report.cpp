#include "ciest/report.hpp"

#include <Eigen/Core>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include "ciest/error.hpp"
#include "ciest/simd/kernels.hpp"

namespace ciest {

using nlohmann::json;

std::vector<std::string> trace_columns(Algorithm algorithm, std::size_t n_sensors, std::size_t param_dim,
                                       bool with_estimates) {
  std::vector<std::string> cols{"iter"};
  for (std::size_t n = 0; n < n_sensors; ++n) cols.push_back("err_sensor_" + std::to_string(n));
  cols.push_back("consensus_gap");
  if (algorithm == Algorithm::nlu) cols.push_back("transformed_err");
  cols.push_back("alpha");
  cols.push_back("consensus_weight");
  if (with_estimates)
    for (std::size_t n = 0; n < n_sensors; ++n)
      for (std::size_t m = 0; m < param_dim; ++m) cols.push_back("est_" + std::to_string(n) + "_" + std::to_string(m));
  return cols;
}

std::string trace_file_name(std::uint64_t seed) { return "trial_" + std::to_string(seed) + ".csv"; }

namespace {

void put(std::string& line, double v) {
  char buf[32];
  auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
  (void)ec;
  line.push_back(',');
  line.append(buf, end);
}

double parse_double(const std::string& s, const std::filesystem::path& path) {
  double v = 0.0;
  const char* b = s.data();
  auto [end, ec] = std::from_chars(b, b + s.size(), v);
  if (ec != std::errc() || end != b + s.size()) {
    if (s == "nan") return std::nan("");
    if (s == "inf") return INFINITY;
    if (s == "-inf") return -INFINITY;
    throw IoError("malformed number '" + s + "' in " + path.string());
  }
  return v;
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::istringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(cell);
  return out;
}

}  // namespace

void write_trace_csv(const Trace& trace, const std::filesystem::path& path) {
  const bool with_est = !trace.rows.empty() && !trace.rows.front().estimates.empty();
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  const auto cols = trace_columns(trace.algorithm, trace.n_sensors, trace.param_dim, with_est);
  for (std::size_t k = 0; k < cols.size(); ++k) out << (k ? "," : "") << cols[k];
  out << '\n';
  std::string line;
  for (const auto& r : trace.rows) {
    line = std::to_string(r.iter);
    for (double e : r.sensor_err) put(line, e);
    put(line, r.consensus_gap);
    if (trace.algorithm == Algorithm::nlu) put(line, r.transformed_err);
    put(line, r.alpha);
    put(line, r.consensus_weight);
    for (double e : r.estimates) put(line, e);
    out << line << '\n';
  }
  if (!out) throw IoError("failed writing " + path.string());
}

Trace read_trace_csv(const std::filesystem::path& path, Algorithm algorithm, std::size_t n_sensors,
                     std::size_t param_dim, std::uint64_t seed) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw IoError(path.string() + " is empty");
  const auto header = split_csv(line);
  const bool with_est = header == trace_columns(algorithm, n_sensors, param_dim, true);
  if (!with_est && header != trace_columns(algorithm, n_sensors, param_dim, false))
    throw IoError(path.string() + " does not have the expected column layout");

  Trace t;
  t.seed = seed;
  t.algorithm = algorithm;
  t.n_sensors = n_sensors;
  t.param_dim = param_dim;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto cells = split_csv(line);
    if (cells.size() != header.size()) throw IoError("row with wrong number of cells in " + path.string());
    std::size_t k = 0;
    TraceRow r;
    r.iter = std::stoull(cells[k++]);
    for (std::size_t n = 0; n < n_sensors; ++n) r.sensor_err.push_back(parse_double(cells[k++], path));
    r.consensus_gap = parse_double(cells[k++], path);
    r.transformed_err = algorithm == Algorithm::nlu ? parse_double(cells[k++], path) : std::nan("");
    r.alpha = parse_double(cells[k++], path);
    r.consensus_weight = parse_double(cells[k++], path);
    while (k < cells.size()) r.estimates.push_back(parse_double(cells[k++], path));
    t.rows.push_back(std::move(r));
  }
  return t;
}

json version_info() {
  return {{"ciest", kVersion},
          {"csv_format", kCsvFormatVersion},
          {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." + std::to_string(EIGEN_MAJOR_VERSION) + "." +
                        std::to_string(EIGEN_MINOR_VERSION)},
          {"compiler", __VERSION__},
          {"kernels", simd::active().name}};
}

json matrix_to_json(const Eigen::MatrixXd& m) {
  json a = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    a.push_back(row);
  }
  return a;
}

namespace {

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

}  // namespace

json diagnostics_json(const DiagnosticsReport& rep) {
  json out = json::object();
  if (rep.consistency) {
    const auto& c = *rep.consistency;
    out["consistency"] = {{"trials", c.trials},
                          {"diverged", c.diverged},
                          {"median_initial_error", finite_or_null(c.median_initial_error)},
                          {"median_final_error", finite_or_null(c.median_final_error)},
                          {"p90_final_error", finite_or_null(c.p90_final_error)},
                          {"median_ratio", finite_or_null(c.median_ratio)},
                          {"p90_ratio", finite_or_null(c.p90_ratio)}};
  }
  if (rep.mse) {
    json mse = json::array();
    for (double v : rep.mse->mse) mse.push_back(finite_or_null(v));
    out["mse"] = {{"iters", rep.mse->iters},
                  {"mse", mse},
                  {"slope", finite_or_null(rep.mse->slope)},
                  {"slope_final_decade", finite_or_null(rep.mse->slope_final_decade)}};
  }
  if (rep.consensus) {
    const auto& c = *rep.consensus;
    out["consensus"] = {{"iters", c.iters},
                        {"median_gap", c.median_gap},
                        {"final_q10", c.final_q10},
                        {"final_q50", c.final_q50},
                        {"final_q90", c.final_q90}};
  }
  if (rep.normality) {
    const auto& n = *rep.normality;
    json blocks = json::array();
    for (const auto& b : n.empirical) blocks.push_back(matrix_to_json(b));
    out["normality"] = {{"iteration", n.iteration},
                        {"degenerate", n.degenerate},
                        {"empirical_covariance", blocks},
                        {"relative_frobenius", n.relative_frobenius},
                        {"max_relative_frobenius", n.max_relative_frobenius},
                        {"skewness", n.skewness},
                        {"excess_kurtosis", n.excess_kurtosis}};
  }
  return out;
}

json variance_json(const AsymptoticVarianceReport& r) {
  json blocks = json::array();
  for (const auto& b : r.sensor_blocks) blocks.push_back(matrix_to_json(b));
  return {{"stability_margin", r.stability_margin},
          {"lyapunov_residual", r.lyapunov_residual},
          {"trace_over_n", r.trace_over_n},
          {"sensor_blocks", blocks},
          {"s", matrix_to_json(r.s)},
          {"s0", matrix_to_json(r.s0)},
          {"s_h", matrix_to_json(r.s_h)},
          {"s_zeta", matrix_to_json(r.s_zeta)},
          {"s_q", matrix_to_json(r.s_q)},
          {"sigma", matrix_to_json(r.sigma)},
          {"s_h_monte_carlo", r.s_h_monte_carlo},
          {"s_h_std_error", r.s_h_std_error},
          {"s_q_monte_carlo", r.s_q_monte_carlo}};
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(6);
  os << v;
  return os.str();
}

std::string summary_table(const std::vector<std::pair<std::string, std::string>>& rows) {
  std::size_t w = 6;
  for (const auto& r : rows) w = std::max(w, r.first.size());
  std::ostringstream os;
  os << std::string(w, '-') << "  " << std::string(16, '-') << '\n';
  os << "metric" << std::string(w - 6, ' ') << "  value\n";
  os << std::string(w, '-') << "  " << std::string(16, '-') << '\n';
  for (const auto& [k, v] : rows) os << k << std::string(w - k.size(), ' ') << "  " << v << '\n';
  return os.str();
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  try {
    return json::parse(in);
  } catch (const json::parse_error& e) {
    throw IoError(path.string() + ": " + e.what());
  }
}

}  // namespace ciest
