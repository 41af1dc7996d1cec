#include "ciest/estimators.hpp"

#include <cmath>

#include "ciest/error.hpp"
#include "ciest/simd/kernels.hpp"

namespace ciest {

namespace {

void prepare(StepScratch& s, std::size_t len) {
  s.consensus.resize(len);
  s.innovation.resize(len);
}

void check_sizes(std::size_t have, std::size_t want, const char* what) {
  if (have != want)
    throw InvalidArgument(std::string(what) + " has length " + std::to_string(have) + ", expected " +
                          std::to_string(want));
}

}  // namespace

Algorithm parse_algorithm(const std::string& name) {
  if (name == "lu") return Algorithm::lu;
  if (name == "nu") return Algorithm::nu;
  if (name == "nlu") return Algorithm::nlu;
  throw InvalidArgument("unknown algorithm '" + name + "' (lu|nu|nlu)");
}

std::string algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::lu: return "lu";
    case Algorithm::nu: return "nu";
    case Algorithm::nlu: return "nlu";
  }
  return "?";
}

void check_divergence(const Eigen::VectorXd& x, std::uint64_t iteration, const char* what) {
  if (!x.allFinite()) throw DivergenceError(iteration, std::string(what) + " has a non-finite entry");
  const double norm = x.norm();
  if (norm > kDivergenceNorm)
    throw DivergenceError(iteration, std::string(what) + " norm " + std::to_string(norm) + " exceeds 1e12");
}

void lu_step(EstimatorState& state, const LaplacianMatrix& L, std::span<const double> z,
             const LinearModel& model, NeighborExchange& exchange, double alpha, double b,
             StepScratch& scratch) {
  const std::size_t N = model.n_sensors();
  const std::size_t M = model.param_dim();
  auto& x = state.estimates;
  check_sizes(static_cast<std::size_t>(x.size()), N * M, "estimate vector");
  check_sizes(z.size(), model.total_obs_dim(), "observation vector");
  if (!(alpha > 0.0)) throw InvalidArgument("alpha must be positive");
  prepare(scratch, N * M);
  scratch.block.resize(M);

  exchange.consensus_term(L, {x.data(), N * M}, scratch.consensus);
  for (std::size_t n = 0; n < N; ++n) {
    double* r = scratch.innovation.data() + n * M;
    model.gram_apply(n, x.data() + n * M, r);
    model.project_obs(n, z.data() + model.obs_offset(n), scratch.block.data());
    for (std::size_t k = 0; k < M; ++k) r[k] -= scratch.block[k];
  }
  simd::active().single_scale_update(x.data(), scratch.consensus.data(), scratch.innovation.data(), alpha, b,
                                     N * M);
  ++state.iteration;
  check_divergence(x, state.iteration, "estimate");
}

void nu_step(EstimatorState& state, const LaplacianMatrix& L, std::span<const double> J,
             const SeparableModel& model, NeighborExchange& exchange, double alpha, double beta,
             StepScratch& scratch) {
  const std::size_t N = model.n_sensors();
  const std::size_t M = model.param_dim;
  auto& x = state.estimates;
  check_sizes(static_cast<std::size_t>(x.size()), N * M, "estimate vector");
  check_sizes(J.size(), N * M, "transformed observation");
  if (!(alpha > 0.0) || !(beta > 0.0)) throw InvalidArgument("alpha and beta must be positive");
  prepare(scratch, N * M);

  exchange.consensus_term(L, {x.data(), N * M}, scratch.consensus);
  for (std::size_t n = 0; n < N; ++n) {
    std::span<double> r(scratch.innovation.data() + n * M, M);
    model.sensor_mean(n, {x.data() + n * M, M}, r);
    for (std::size_t k = 0; k < M; ++k) r[k] -= J[n * M + k];
  }
  simd::active().single_scale_update(x.data(), scratch.consensus.data(), scratch.innovation.data(), alpha, beta,
                                     N * M);
  ++state.iteration;
  check_divergence(x, state.iteration, "estimate");
}

void nlu_step(EstimatorState& state, const LaplacianMatrix& L, std::span<const double> J,
              const SeparableModel& model, NeighborExchange& exchange, double alpha, double beta,
              StepScratch& scratch, bool check_average) {
  const std::size_t N = model.n_sensors();
  const std::size_t M = model.param_dim;
  if (!state.transformed) throw InvalidArgument("NLU state has no transformed estimates");
  auto& xt = *state.transformed;
  check_sizes(static_cast<std::size_t>(xt.size()), N * M, "transformed estimate vector");
  check_sizes(J.size(), N * M, "transformed observation");
  if (!(alpha > 0.0) || !(beta >= 0.0)) throw InvalidArgument("need alpha > 0 and beta >= 0");
  prepare(scratch, N * M);

  exchange.consensus_term(L, {xt.data(), N * M}, scratch.consensus, check_average ? &scratch.audit : nullptr);

  Eigen::VectorXd expected;
  if (check_average) {
    const ConsensusProjector P(N, M);
    const Eigen::VectorXd avg = P.block_average(xt);
    const Eigen::VectorXd avgJ = P.block_average(Eigen::Map<const Eigen::VectorXd>(J.data(), J.size()));
    const auto noise = aggregate_quant_noise(L, M, scratch.audit);
    const Eigen::VectorXd avg_noise = P.block_average(noise.upsilon + noise.psi);
    expected = avg - alpha * (avg - avgJ) - beta * avg_noise;
  }

  simd::active().mixed_scale_update(xt.data(), scratch.consensus.data(), J.data(), alpha, beta, N * M);
  ++state.iteration;
  check_divergence(xt, state.iteration, "transformed estimate");

  if (check_average) {
    const Eigen::VectorXd got = ConsensusProjector(N, M).block_average(xt);
    const double scale = std::max({1.0, expected.cwiseAbs().maxCoeff(), xt.cwiseAbs().maxCoeff()});
    const double dev = (got - expected).cwiseAbs().maxCoeff();
    if (dev > 1e-12 * scale)
      throw Error("average dynamics violated at iteration " + std::to_string(state.iteration) + ": deviation " +
                  std::to_string(dev));
  }

  Eigen::VectorXd block(M);
  for (std::size_t n = 0; n < N; ++n) {
    block = xt.segment(static_cast<Eigen::Index>(n * M), static_cast<Eigen::Index>(M));
    Eigen::VectorXd back;
    try {
      back = model.inverse(block);
    } catch (const std::exception& e) {
      throw DivergenceError(state.iteration, "h^{-1} failed for sensor " + std::to_string(n) + ": " + e.what());
    }
    if (static_cast<std::size_t>(back.size()) != M || !back.allFinite())
      throw DivergenceError(state.iteration, "h^{-1} is undefined at the transformed estimate of sensor " +
                                                 std::to_string(n));
    state.estimates.segment(static_cast<Eigen::Index>(n * M), static_cast<Eigen::Index>(M)) = back;
  }
  check_divergence(state.estimates, state.iteration, "estimate");
}

EstimatorState make_nlu_state(const Eigen::VectorXd& x0, const SeparableModel& model) {
  const std::size_t N = model.n_sensors();
  const std::size_t M = model.param_dim;
  check_sizes(static_cast<std::size_t>(x0.size()), N * M, "initial estimate");
  EstimatorState s;
  s.estimates = x0;
  s.transformed = Eigen::VectorXd(x0.size());
  for (std::size_t n = 0; n < N; ++n)
    s.transformed->segment(static_cast<Eigen::Index>(n * M), static_cast<Eigen::Index>(M)) =
        model.h(x0.segment(static_cast<Eigen::Index>(n * M), static_cast<Eigen::Index>(M)));
  return s;
}

}  // namespace ciest
