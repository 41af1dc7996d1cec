#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ciest/graph.hpp"
#include "ciest/models.hpp"
#include "ciest/quantizer.hpp"

namespace ciest {

enum class Algorithm { lu, nu, nlu };
Algorithm parse_algorithm(const std::string& name);
std::string algorithm_name(Algorithm a);

/// x(i) stacked over sensors; `transformed` holds xtilde(i) for NLU.
struct EstimatorState {
  std::uint64_t iteration = 0;
  Eigen::VectorXd estimates;
  std::optional<Eigen::VectorXd> transformed;
};

/// Any non-finite entry or a norm above this aborts the trial.
inline constexpr double kDivergenceNorm = 1e12;

/// Buffers reused across steps so the hot loop does not allocate.
struct StepScratch {
  std::vector<double> consensus;
  std::vector<double> innovation;
  std::vector<double> block;
  std::vector<LinkExchange> audit;
};

/// x <- x - alpha [ b (c(x) ) + D_H (D_H^T x - z) ] where c is the consensus
/// term of the (possibly quantized) neighbor exchange, so c = (L (x) I) x +
/// upsilon + psi.
void lu_step(EstimatorState& state, const LaplacianMatrix& L, std::span<const double> z,
             const LinearModel& model, NeighborExchange& exchange, double alpha, double b,
             StepScratch& scratch);

/// x <- x - alpha [ beta c(x) + M(x) - J ] with M(x) the stacked h_n(x_n).
void nu_step(EstimatorState& state, const LaplacianMatrix& L, std::span<const double> J,
             const SeparableModel& model, NeighborExchange& exchange, double alpha, double beta,
             StepScratch& scratch);

/// xtilde <- xtilde - beta c(xtilde) - alpha (xtilde - J), then
/// x_n = h^{-1}(xtilde_n). The exchange carries xtilde_l = h(x_l). With
/// `check_average`, the block average of xtilde is verified against
/// xavg - alpha (xavg - avg J) - beta avg(upsilon + psi) to 1e-12.
void nlu_step(EstimatorState& state, const LaplacianMatrix& L, std::span<const double> J,
              const SeparableModel& model, NeighborExchange& exchange, double alpha, double beta,
              StepScratch& scratch, bool check_average = false);

/// Throws DivergenceError if `x` is non-finite or too large.
void check_divergence(const Eigen::VectorXd& x, std::uint64_t iteration, const char* what);

/// Initial NLU state: xtilde_n = h(x_n(0)).
EstimatorState make_nlu_state(const Eigen::VectorXd& x0, const SeparableModel& model);

}  // namespace ciest
