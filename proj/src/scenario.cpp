#include "ciest/scenario.hpp"

#include <openssl/evp.h>

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include "ciest/models.hpp"
#include "ciest/schedules.hpp"

namespace ciest {

using nlohmann::json;

namespace {

[[noreturn]] void field_error(const std::string& path, const std::string& what) {
  throw ValidationError("parse", "field '" + path + "': " + what);
}

void allow_keys(const json& obj, const std::string& path, std::initializer_list<const char*> keys) {
  if (!obj.is_object()) field_error(path, "expected an object");
  const std::set<std::string> allowed(keys.begin(), keys.end());
  for (const auto& [k, v] : obj.items())
    if (!allowed.count(k)) field_error(path.empty() ? k : path + "." + k, "unknown field");
}

const json& need(const json& obj, const std::string& path, const char* key) {
  if (!obj.contains(key)) field_error(path.empty() ? key : path + "." + key, "missing");
  return obj.at(key);
}

std::string sub(const std::string& path, const std::string& key) { return path.empty() ? key : path + "." + key; }

double get_number(const json& v, const std::string& path) {
  if (!v.is_number()) field_error(path, "expected a number");
  return v.get<double>();
}

std::uint64_t get_count(const json& v, const std::string& path) {
  if (!v.is_number_integer() || v.get<std::int64_t>() < 0) field_error(path, "expected a nonnegative integer");
  return v.get<std::uint64_t>();
}

bool get_bool(const json& v, const std::string& path) {
  if (!v.is_boolean()) field_error(path, "expected true or false");
  return v.get<bool>();
}

std::string get_string(const json& v, const std::string& path) {
  if (!v.is_string()) field_error(path, "expected a string");
  return v.get<std::string>();
}

Eigen::VectorXd get_vector(const json& v, const std::string& path) {
  if (!v.is_array() || v.empty()) field_error(path, "expected a non-empty array of numbers");
  Eigen::VectorXd out(static_cast<Eigen::Index>(v.size()));
  for (std::size_t k = 0; k < v.size(); ++k) out[static_cast<Eigen::Index>(k)] = get_number(v[k], path + "[" + std::to_string(k) + "]");
  return out;
}

Eigen::MatrixXd get_matrix(const json& v, const std::string& path) {
  if (!v.is_array() || v.empty()) field_error(path, "expected a non-empty array of rows");
  Eigen::MatrixXd out;
  for (std::size_t r = 0; r < v.size(); ++r) {
    const Eigen::VectorXd row = get_vector(v[r], path + "[" + std::to_string(r) + "]");
    if (r == 0) out.resize(static_cast<Eigen::Index>(v.size()), row.size());
    if (row.size() != out.cols()) field_error(path, "rows have different lengths");
    out.row(static_cast<Eigen::Index>(r)) = row.transpose();
  }
  return out;
}

std::vector<Eigen::MatrixXd> get_matrices(const json& v, const std::string& path) {
  if (!v.is_array() || v.empty()) field_error(path, "expected a non-empty array of matrices");
  std::vector<Eigen::MatrixXd> out;
  for (std::size_t k = 0; k < v.size(); ++k) out.push_back(get_matrix(v[k], path + "[" + std::to_string(k) + "]"));
  return out;
}

json vector_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index k = 0; k < v.size(); ++k) a.push_back(v[k]);
  return a;
}

json matrix_json(const Eigen::MatrixXd& m) {
  json a = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) a.push_back(vector_json(m.row(r).transpose()));
  return a;
}

ScheduleSpec get_schedule(const json& v, const std::string& path) {
  allow_keys(v, path, {"a", "tau"});
  return {get_number(need(v, path, "a"), sub(path, "a")), get_number(need(v, path, "tau"), sub(path, "tau"))};
}

void expand_linear_builtin(ModelSpec& m, const json& v, std::size_t nodes, std::size_t dim) {
  const std::string name = get_string(v.at("builtin"), "model.builtin");
  const double sigma = m.noise_std.value_or(1.0);
  if (name == "scalar-network") {
    const double gain = v.contains("gain") ? get_number(v.at("gain"), "model.gain") : 1.0;
    if (dim != 1) field_error("theta", "scalar-network needs a scalar parameter");
    const LinearModel lm = scalar_network_model(nodes, gain, sigma);
    for (std::size_t n = 0; n < nodes; ++n) m.matrices.push_back(lm.mean_matrix(n));
  } else if (name == "partial-observation") {
    const LinearModel lm = partial_observation_model(nodes, dim, sigma);
    for (std::size_t n = 0; n < nodes; ++n) m.matrices.push_back(lm.mean_matrix(n));
  } else {
    field_error("model.builtin", "unknown linear builtin '" + name + "' (scalar-network|partial-observation)");
  }
  m.noise_std = sigma;
}

}  // namespace

ScenarioConfig parse_scenario(const std::string& text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1, col = 1;
    for (std::size_t k = 0; k + 1 < e.byte && k < text.size(); ++k) {
      if (text[k] == '\n') {
        ++line;
        col = 1;
      } else {
        ++col;
      }
    }
    throw ValidationError("parse", "syntax error at line " + std::to_string(line) + ", column " +
                                         std::to_string(col) + ": " + e.what());
  }
  allow_keys(doc, "", {"name", "graph", "links", "model", "quantizer", "alpha", "beta", "b", "epsilon1", "theta",
                       "initial", "run"});
  ScenarioConfig c;
  if (doc.contains("name")) c.name = get_string(doc.at("name"), "name");

  const json& g = need(doc, "", "graph");
  allow_keys(g, "graph", {"topology", "nodes", "edges"});
  c.graph.nodes = get_count(need(g, "graph", "nodes"), "graph.nodes");
  if (g.contains("topology") == g.contains("edges")) field_error("graph", "give exactly one of 'topology' or 'edges'");
  if (g.contains("topology")) {
    try {
      c.graph.topology = parse_topology(get_string(g.at("topology"), "graph.topology"));
    } catch (const InvalidArgument& e) {
      field_error("graph.topology", e.what());
    }
  } else {
    const json& edges = g.at("edges");
    if (!edges.is_array()) field_error("graph.edges", "expected an array of [a, b] pairs");
    for (std::size_t k = 0; k < edges.size(); ++k) {
      const std::string p = "graph.edges[" + std::to_string(k) + "]";
      if (!edges[k].is_array() || edges[k].size() != 2) field_error(p, "expected a pair [a, b]");
      c.graph.edges.emplace_back(get_count(edges[k][0], p), get_count(edges[k][1], p));
    }
  }

  if (doc.contains("links")) {
    const json& l = doc.at("links");
    allow_keys(l, "links", {"kind", "p"});
    c.links.kind = get_string(need(l, "links", "kind"), "links.kind");
    if (c.links.kind != "fixed" && c.links.kind != "erasure" && c.links.kind != "gossip")
      field_error("links.kind", "expected fixed, erasure or gossip");
    if (c.links.kind == "erasure") c.links.p = get_number(need(l, "links", "p"), "links.p");
    else if (l.contains("p")) field_error("links.p", "only erasure links take a failure probability");
  }

  c.theta = get_vector(need(doc, "", "theta"), "theta");

  const json& m = need(doc, "", "model");
  allow_keys(m, "model", {"kind", "builtin", "gain", "matrices", "noise_cov", "noise_std", "matrix_noise_std",
                          "factorization"});
  c.model.kind = get_string(need(m, "model", "kind"), "model.kind");
  c.model.param_dim = static_cast<std::size_t>(c.theta.size());
  if (m.contains("noise_std")) c.model.noise_std = get_number(m.at("noise_std"), "model.noise_std");
  if (c.model.kind == "linear") {
    if (m.contains("builtin")) {
      if (m.contains("matrices") || m.contains("noise_cov"))
        field_error("model", "a builtin linear model takes no matrices or covariance");
      expand_linear_builtin(c.model, m, c.graph.nodes, c.model.param_dim);
    } else {
      c.model.matrices = get_matrices(need(m, "model", "matrices"), "model.matrices");
      if (m.contains("noise_cov")) c.model.noise_cov = get_matrix(m.at("noise_cov"), "model.noise_cov");
      if (c.model.noise_cov.has_value() == c.model.noise_std.has_value())
        field_error("model", "give exactly one of 'noise_cov' or 'noise_std'");
    }
    if (m.contains("gain") && !m.contains("builtin")) field_error("model.gain", "only builtin models take a gain");
    if (m.contains("matrix_noise_std"))
      c.model.matrix_noise_std = get_matrices(m.at("matrix_noise_std"), "model.matrix_noise_std");
    if (m.contains("factorization")) {
      c.model.factorization = get_string(m.at("factorization"), "model.factorization");
      if (c.model.factorization != "cholesky" && c.model.factorization != "eigen")
        field_error("model.factorization", "expected cholesky or eigen");
    }
  } else if (c.model.kind.rfind("separable-builtin:", 0) == 0) {
    for (const char* k : {"builtin", "gain", "matrices", "noise_cov", "matrix_noise_std", "factorization"})
      if (m.contains(k)) field_error(std::string("model.") + k, "not used by separable builtins");
    if (c.model.kind != "separable-builtin:cubic")
      field_error("model.kind", "unknown separable builtin (available: separable-builtin:cubic)");
    if (!c.model.noise_std) c.model.noise_std = 1.0;
  } else {
    field_error("model.kind", "expected linear or separable-builtin:<name>");
  }

  if (doc.contains("quantizer")) {
    const json& q = doc.at("quantizer");
    allow_keys(q, "quantizer", {"enabled", "step", "dithered"});
    c.quantizer.enabled = get_bool(need(q, "quantizer", "enabled"), "quantizer.enabled");
    if (q.contains("step")) c.quantizer.step = get_number(q.at("step"), "quantizer.step");
    if (q.contains("dithered")) c.quantizer.dithered = get_bool(q.at("dithered"), "quantizer.dithered");
  }

  c.alpha = get_schedule(need(doc, "", "alpha"), "alpha");
  if (doc.contains("beta")) c.beta = get_schedule(doc.at("beta"), "beta");
  if (doc.contains("b")) c.b = get_number(doc.at("b"), "b");
  if (doc.contains("epsilon1")) c.epsilon1 = get_number(doc.at("epsilon1"), "epsilon1");

  if (doc.contains("initial")) {
    const json& init = doc.at("initial");
    if (!init.is_array() || init.empty()) field_error("initial", "expected a vector or a list of per-sensor vectors");
    if (init[0].is_array()) {
      for (std::size_t n = 0; n < init.size(); ++n)
        c.initial.push_back(get_vector(init[n], "initial[" + std::to_string(n) + "]"));
    } else {
      const Eigen::VectorXd v = get_vector(init, "initial");
      c.initial.assign(c.graph.nodes, v);
    }
  }

  if (doc.contains("run")) {
    const json& r = doc.at("run");
    allow_keys(r, "run", {"algorithm", "iterations", "seeds", "stride", "record_estimates"});
    if (r.contains("algorithm")) {
      try {
        c.run.algorithm = parse_algorithm(get_string(r.at("algorithm"), "run.algorithm"));
      } catch (const InvalidArgument& e) {
        field_error("run.algorithm", e.what());
      }
    }
    if (r.contains("iterations")) c.run.iterations = get_count(r.at("iterations"), "run.iterations");
    if (r.contains("seeds")) {
      const json& s = r.at("seeds");
      if (!s.is_array() || s.size() != 2) field_error("run.seeds", "expected [first, last]");
      c.run.seed_first = get_count(s[0], "run.seeds[0]");
      c.run.seed_last = get_count(s[1], "run.seeds[1]");
      if (c.run.seed_last < c.run.seed_first) field_error("run.seeds", "last seed is below the first");
    }
    if (r.contains("stride")) c.run.stride = get_count(r.at("stride"), "run.stride");
    if (r.contains("record_estimates")) c.run.record_estimates = get_bool(r.at("record_estimates"), "run.record_estimates");
  }
  return c;
}

ScenarioConfig load_scenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read scenario file " + path);
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_scenario(ss.str());
}

json serialize_scenario(const ScenarioConfig& c) {
  json doc;
  doc["name"] = c.name;
  json g;
  g["nodes"] = c.graph.nodes;
  if (c.graph.topology) {
    g["topology"] = topology_name(*c.graph.topology);
  } else {
    g["edges"] = json::array();
    for (const auto& [a, b] : c.graph.edges) g["edges"].push_back({a, b});
  }
  doc["graph"] = g;
  doc["links"] = {{"kind", c.links.kind}};
  if (c.links.kind == "erasure") doc["links"]["p"] = c.links.p;

  json m;
  m["kind"] = c.model.kind;
  if (c.model.noise_std) m["noise_std"] = *c.model.noise_std;
  if (c.model.kind == "linear") {
    m["matrices"] = json::array();
    for (const auto& H : c.model.matrices) m["matrices"].push_back(matrix_json(H));
    if (c.model.noise_cov) m["noise_cov"] = matrix_json(*c.model.noise_cov);
    if (c.model.matrix_noise_std) {
      m["matrix_noise_std"] = json::array();
      for (const auto& S : *c.model.matrix_noise_std) m["matrix_noise_std"].push_back(matrix_json(S));
    }
    m["factorization"] = c.model.factorization;
  }
  doc["model"] = m;
  doc["quantizer"] = {{"enabled", c.quantizer.enabled}, {"step", c.quantizer.step}, {"dithered", c.quantizer.dithered}};
  doc["alpha"] = {{"a", c.alpha.a}, {"tau", c.alpha.tau}};
  if (c.beta) doc["beta"] = {{"a", c.beta->a}, {"tau", c.beta->tau}};
  doc["b"] = c.b;
  if (c.epsilon1) doc["epsilon1"] = *c.epsilon1;
  doc["theta"] = vector_json(c.theta);
  if (!c.initial.empty()) {
    doc["initial"] = json::array();
    for (const auto& v : c.initial) doc["initial"].push_back(vector_json(v));
  }
  doc["run"] = {{"algorithm", algorithm_name(c.run.algorithm)},
                {"iterations", c.run.iterations},
                {"seeds", {c.run.seed_first, c.run.seed_last}},
                {"stride", c.run.stride},
                {"record_estimates", c.run.record_estimates}};
  return doc;
}

std::string sha256_hex(const std::string& data) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(data.data(), data.size(), md, &len, EVP_sha256(), nullptr) != 1)
    throw Error("SHA-256 computation failed");
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int k = 0; k < len; ++k) {
    out.push_back(hex[md[k] >> 4]);
    out.push_back(hex[md[k] & 15]);
  }
  return out;
}

std::string scenario_digest(const ScenarioConfig& config) {
  // nlohmann::json keeps object keys sorted, so dump() is canonical.
  return sha256_hex(serialize_scenario(config).dump());
}

void ScenarioCheck::require_ok() const {
  if (!errors.empty()) throw ValidationError(errors);
}

LinkFailureModel build_network(const ScenarioConfig& c) {
  try {
    const auto edges = c.graph.topology ? topology_edges(*c.graph.topology, c.graph.nodes) : c.graph.edges;
    LaplacianMatrix base = LaplacianMatrix::from_edges(c.graph.nodes, edges);
    if (c.links.kind == "erasure") return LinkFailureModel::erasure(std::move(base), c.links.p);
    if (c.links.kind == "gossip") return LinkFailureModel::gossip(std::move(base));
    return LinkFailureModel::fixed(std::move(base));
  } catch (const InvalidArgument& e) {
    throw ValidationError("graph", e.what());
  }
}

std::variant<LinearModel, SeparableModel> build_model(const ScenarioConfig& c) {
  const std::size_t N = c.graph.nodes;
  try {
    if (c.model.kind == "separable-builtin:cubic") {
      if (c.theta.size() != 1) throw InvalidArgument("the cubic model has a scalar parameter");
      return cubic_model(N, *c.model.noise_std);
    }
    if (c.model.matrices.size() != N)
      throw ValidationError("sensor-count", "model has " + std::to_string(c.model.matrices.size()) +
                                                  " sensors but the graph has " + std::to_string(N) + " nodes");
    std::size_t obs = 0;
    for (const auto& H : c.model.matrices) obs += static_cast<std::size_t>(H.rows());
    const auto d = static_cast<Eigen::Index>(obs);
    Eigen::MatrixXd cov = c.model.noise_cov ? *c.model.noise_cov
                                            : Eigen::MatrixXd(std::pow(*c.model.noise_std, 2) * Eigen::MatrixXd::Identity(d, d));
    LinearModel lm(c.model.param_dim, c.model.matrices, cov,
                   c.model.factorization == "eigen" ? NoiseFactorization::eigen : NoiseFactorization::cholesky);
    if (c.model.matrix_noise_std) lm.with_matrix_noise_std(*c.model.matrix_noise_std);
    return lm;
  } catch (const InvalidArgument& e) {
    throw ValidationError("model", e.what());
  }
}

Problem build_problem(const ScenarioConfig& c, Algorithm algorithm) {
  const std::size_t N = c.graph.nodes;
  const std::size_t M = static_cast<std::size_t>(c.theta.size());
  Eigen::VectorXd x0;
  if (!c.initial.empty()) {
    if (c.initial.size() != N) throw ValidationError("initial", "need one initial estimate per sensor");
    x0.resize(static_cast<Eigen::Index>(N * M));
    for (std::size_t n = 0; n < N; ++n) {
      if (static_cast<std::size_t>(c.initial[n].size()) != M)
        throw ValidationError("initial", "initial estimate of sensor " + std::to_string(n) + " has the wrong length");
      x0.segment(static_cast<Eigen::Index>(n * M), static_cast<Eigen::Index>(M)) = c.initial[n];
    }
  }
  try {
    std::optional<WeightSchedule> beta;
    if (algorithm == Algorithm::nlu) {
      if (!c.beta) throw ValidationError("nlu-schedule", "NLU needs a 'beta' schedule");
      beta = WeightSchedule(c.beta->a, c.beta->tau);
    }
    QuantizerSpec q = c.quantizer;
    q.validate();
    return Problem{build_network(c), build_model(c), q, WeightSchedule(c.alpha.a, c.alpha.tau), beta, c.b,
                   c.theta, x0};
  } catch (const InvalidArgument& e) {
    throw ValidationError("schedule", e.what());
  }
}

ScenarioCheck validate_scenario(const ScenarioConfig& c, Algorithm algorithm) {
  ScenarioCheck out;
  auto err = [&](std::string code, std::string msg) { out.errors.push_back({std::move(code), std::move(msg)}); };
  auto warn = [&](std::string code, std::string msg) { out.warnings.push_back({std::move(code), std::move(msg)}); };

  std::optional<LinkFailureModel> network;
  std::optional<std::variant<LinearModel, SeparableModel>> model;
  try {
    network = build_network(c);
  } catch (const ValidationError& e) {
    for (const auto& i : e.issues()) out.errors.push_back(i);
  }
  try {
    model = build_model(c);
  } catch (const ValidationError& e) {
    for (const auto& i : e.issues()) out.errors.push_back(i);
  }
  try {
    c.quantizer.validate();
  } catch (const InvalidArgument& e) {
    err("quantizer", e.what());
  }
  if (c.quantizer.enabled && !c.quantizer.dithered)
    warn("undithered", "quantization without dither: errors correlate with the signal and may accumulate");
  if (!(c.b > 0.0) && algorithm != Algorithm::nlu) err("consensus-weight", "consensus weight b must be positive");
  if (c.run.stride == 0) err("run", "recording stride must be positive");
  if (!c.initial.empty() && c.initial.size() != c.graph.nodes) err("initial", "need one initial estimate per sensor");
  if (!(c.alpha.a > 0.0)) err("persistence", "alpha scale a must be positive");
  if (!(c.alpha.tau >= 0.0 && c.alpha.tau <= 1.0))
    err("persistence", "alpha exponent must lie in (0.5, 1], got " + std::to_string(c.alpha.tau));

  std::optional<LaplacianMatrix> Lbar;
  if (network) {
    Lbar = mean_laplacian(*network);
    out.lambda2 = algebraic_connectivity(*Lbar);
    if (!(out.lambda2 > 0.0))
      err("mean-connectivity", "the mean network is disconnected (lambda_2 of the mean Laplacian is 0)");
  }

  const LinearModel* linear = model ? std::get_if<LinearModel>(&*model) : nullptr;
  const SeparableModel* separable = model ? std::get_if<SeparableModel>(&*model) : nullptr;
  if (algorithm == Algorithm::lu && separable)
    err("algorithm-model", "LU needs a linear observation model; use nu or nlu for " + c.model.kind);

  if (linear) {
    const auto obs = check_observability(*linear);
    if (!obs.full_rank)
      err("observability", "sum of Hbar_n^T Hbar_n is rank deficient (smallest singular value " +
                               std::to_string(obs.min_singular_value) + "); theta is not identifiable");
  }

  const bool alpha_ok = c.alpha.a > 0.0 && c.alpha.tau >= 0.0 && c.alpha.tau <= 1.0;
  if (algorithm != Algorithm::nlu && alpha_ok) {
    const auto v = validate_lu_schedule(WeightSchedule(c.alpha.a, c.alpha.tau), LuScheduleMode::persistence);
    for (const auto& i : v.issues) out.errors.push_back(i);
  }

  if (algorithm == Algorithm::lu && linear && Lbar && c.b > 0.0 && out.errors.empty()) {
    const auto gain = check_lu_gain_matrix(c.b, *Lbar, *linear);
    out.gain_lambda_min = gain.lambda_min;
    if (gain.lambda_min > 0.0) {
      const auto v =
          validate_lu_schedule(WeightSchedule(c.alpha.a, c.alpha.tau), LuScheduleMode::normality, gain.lambda_min);
      for (const auto& i : v.issues)
        warn(i.code, i.message + " (consistency is unaffected; the asymptotic covariance does not exist)");
    }
  }

  if (algorithm == Algorithm::nu && model && out.lambda2 > 0.0) {
    std::optional<SeparableModel> embedded;
    if (linear && out.errors.empty()) embedded = embed_linear(*linear);
    const SeparableModel* s = separable ? separable : (embedded ? &*embedded : nullptr);
    if (s) {
      const auto K = s->max_lipschitz();
      if (K && s->strong_monotonicity) {
        const double thr = nu_beta_threshold(*K, *s->strong_monotonicity, out.lambda2);
        out.nu_beta_threshold = thr;
        if (!(c.b > thr))
          warn("nu-beta-threshold", "beta = " + std::to_string(c.b) + " is not above the sufficient threshold " +
                                        std::to_string(thr) + "; convergence is not guaranteed");
      } else {
        warn("lipschitz", "model '" + s->name +
                              "' declares no Lipschitz/monotonicity constants; NU sufficient conditions are unchecked");
      }
    }
  }

  if (algorithm == Algorithm::nlu) {
    if (!c.beta) {
      err("nlu-schedule", "NLU needs a 'beta' schedule");
    } else if (!c.epsilon1) {
      err("nlu-schedule", "NLU needs 'epsilon1'");
    } else {
      try {
        const auto v = validate_nlu_schedules(
            {WeightSchedule(c.alpha.a, c.alpha.tau), WeightSchedule(c.beta->a, c.beta->tau), *c.epsilon1});
        for (const auto& i : v.issues) out.errors.push_back(i);
      } catch (const InvalidArgument& e) {
        err("nlu-schedule", e.what());
      }
    }
    if (model && out.errors.empty()) {
      std::optional<SeparableModel> embedded;
      if (linear) embedded = embed_linear(*linear);
      const SeparableModel& s = separable ? *separable : *embedded;
      std::vector<Eigen::VectorXd> pts{c.theta, 0.5 * c.theta, 2.0 * c.theta,
                                       c.theta + Eigen::VectorXd::Ones(c.theta.size())};
      const auto rt = check_round_trip(s, pts);
      if (!rt.passed) err("invertibility", "h^{-1}(h(theta)) != theta near theta: " + rt.detail);
    }
  }
  return out;
}

}  // namespace ciest
