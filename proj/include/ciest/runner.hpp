#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "ciest/estimators.hpp"
#include "ciest/graph.hpp"
#include "ciest/models.hpp"
#include "ciest/quantizer.hpp"
#include "ciest/schedules.hpp"

namespace ciest {

/// Everything a trial needs besides the seed.
struct Problem {
  LinkFailureModel network;
  std::variant<LinearModel, SeparableModel> model;
  QuantizerSpec quantizer;
  WeightSchedule alpha;
  std::optional<WeightSchedule> beta;  // NLU consensus schedule
  double consensus_weight = 1.0;       // b for LU, beta for NU
  Eigen::VectorXd theta;
  Eigen::VectorXd initial;  // stacked x(0); empty means zeros

  std::size_t n_sensors() const { return network.n_nodes(); }
  std::size_t param_dim() const { return static_cast<std::size_t>(theta.size()); }
};

struct RunOptions {
  Algorithm algorithm = Algorithm::lu;
  std::uint64_t iterations = 0;
  std::uint64_t stride = 1;
  bool record_estimates = false;
  bool check_average = false;  // NLU average-dynamics audit
};

struct TraceRow {
  std::uint64_t iter;
  std::vector<double> sensor_err;  // ||x_n - theta||
  double consensus_gap;            // disagreement norm (of xtilde for NLU)
  double transformed_err;          // max_n ||xtilde_n - h(theta)||, NaN unless NLU
  double alpha;                    // innovation weight used at this step
  double consensus_weight;         // effective weight on the consensus term
  std::vector<double> estimates;   // stacked x, if recorded
};

struct Divergence {
  std::uint64_t iteration;
  std::string message;
};

struct Trace {
  std::uint64_t seed = 0;
  std::string digest;
  Algorithm algorithm = Algorithm::lu;
  std::size_t n_sensors = 0;
  std::size_t param_dim = 0;
  std::vector<TraceRow> rows;
  std::optional<Divergence> divergence;  // set when the trial aborted

  double max_error(const TraceRow& r) const;
};

/// One seeded trial. Per iteration the noise is drawn in a fixed order:
/// graph sample, observation, then dither per ordered link. Rows are kept
/// for i % stride == 0 and for the final iterate. Divergence stops the trial
/// and is reported in the returned trace.
Trace run_trial(const Problem& problem, const RunOptions& options, std::uint64_t seed,
                const std::string& digest = "");

/// Independent trials on a pool of `threads` workers (0 = hardware
/// concurrency). Results are in seed order.
std::vector<Trace> run_trials(const Problem& problem, const RunOptions& options,
                              const std::vector<std::uint64_t>& seeds, const std::string& digest = "",
                              unsigned threads = 0);

}  // namespace ciest
