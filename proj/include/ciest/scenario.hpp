#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "ciest/error.hpp"
#include "ciest/estimators.hpp"
#include "ciest/graph.hpp"
#include "ciest/quantizer.hpp"
#include "ciest/runner.hpp"
#include "json.hpp"

namespace ciest {

struct GraphSpec {
  std::size_t nodes = 0;
  std::optional<Topology> topology;  // otherwise `edges`
  std::vector<Edge> edges;
};

struct LinkSpec {
  std::string kind = "fixed";  // fixed | erasure | gossip
  double p = 0.0;              // erasure failure probability
};

struct ModelSpec {
  std::string kind = "linear";  // linear | separable-builtin:<name>
  std::size_t param_dim = 1;
  std::vector<Eigen::MatrixXd> matrices;                      // linear: Hbar_n
  std::optional<Eigen::MatrixXd> noise_cov;                   // linear: S_zeta
  std::optional<double> noise_std;                            // iid shorthand / builtin noise
  std::optional<std::vector<Eigen::MatrixXd>> matrix_noise_std;  // linear: Htilde entry stds
  std::string factorization = "cholesky";                     // cholesky | eigen
};

struct ScheduleSpec {
  double a = 1.0;
  double tau = 1.0;
};

struct RunSpec {
  Algorithm algorithm = Algorithm::lu;
  std::uint64_t iterations = 1000;
  std::uint64_t seed_first = 0;
  std::uint64_t seed_last = 0;
  std::uint64_t stride = 1;
  bool record_estimates = false;
};

/// A complete experiment description, read from JSON.
struct ScenarioConfig {
  std::string name;
  GraphSpec graph;
  LinkSpec links;
  ModelSpec model;
  QuantizerSpec quantizer;
  ScheduleSpec alpha;
  std::optional<ScheduleSpec> beta;  // NLU
  double b = 1.0;                    // LU consensus weight, NU beta
  std::optional<double> epsilon1;    // NLU
  Eigen::VectorXd theta;
  std::vector<Eigen::VectorXd> initial;  // per sensor; empty means zeros
  RunSpec run;
};

/// Parses JSON text. Syntax errors carry line and column; field errors name
/// the field. Both raise ValidationError with code "parse".
ScenarioConfig parse_scenario(const std::string& text);
ScenarioConfig load_scenario(const std::string& path);

/// Canonical JSON form with every field explicit.
nlohmann::json serialize_scenario(const ScenarioConfig& config);
/// SHA-256 of the canonical form (hex). Stable under key reordering.
std::string scenario_digest(const ScenarioConfig& config);
std::string sha256_hex(const std::string& data);

struct ScenarioCheck {
  std::vector<ValidationIssue> errors;
  std::vector<ValidationIssue> warnings;
  double lambda2 = 0.0;                      // of the mean Laplacian
  std::optional<double> gain_lambda_min;     // LU gain matrix
  std::optional<double> nu_beta_threshold;   // when Lipschitz metadata exists

  bool ok() const { return errors.empty(); }
  void require_ok() const;  // throws ValidationError
};

/// Checks the scenario for `algorithm`: necessary structure fails,
/// sufficient-condition violations warn.
ScenarioCheck validate_scenario(const ScenarioConfig& config, Algorithm algorithm);

/// Builds the runtime objects. Throws ValidationError on structural problems.
LinkFailureModel build_network(const ScenarioConfig& config);
std::variant<LinearModel, SeparableModel> build_model(const ScenarioConfig& config);
Problem build_problem(const ScenarioConfig& config, Algorithm algorithm);

}  // namespace ciest
