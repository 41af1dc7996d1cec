#include "ciest/runner.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <limits>
#include <mutex>
#include <thread>

#include "ciest/error.hpp"

namespace ciest {

double Trace::max_error(const TraceRow& r) const {
  return r.sensor_err.empty() ? 0.0 : *std::max_element(r.sensor_err.begin(), r.sensor_err.end());
}

namespace {

struct Recorder {
  const Problem& problem;
  const RunOptions& options;
  Eigen::VectorXd h_theta;
  ConsensusProjector projector;

  TraceRow row(const EstimatorState& s, double alpha, double weight) const {
    const std::size_t N = problem.n_sensors();
    const auto M = static_cast<Eigen::Index>(problem.param_dim());
    TraceRow r;
    r.iter = s.iteration;
    r.sensor_err.resize(N);
    for (std::size_t n = 0; n < N; ++n)
      r.sensor_err[n] = (s.estimates.segment(static_cast<Eigen::Index>(n) * M, M) - problem.theta).norm();
    if (s.transformed) {
      r.consensus_gap = projector.disagreement_norm(*s.transformed);
      double worst = 0.0;
      for (std::size_t n = 0; n < N; ++n)
        worst = std::max(worst, (s.transformed->segment(static_cast<Eigen::Index>(n) * M, M) - h_theta).norm());
      r.transformed_err = worst;
    } else {
      r.consensus_gap = projector.disagreement_norm(s.estimates);
      r.transformed_err = std::numeric_limits<double>::quiet_NaN();
    }
    r.alpha = alpha;
    r.consensus_weight = weight;
    if (options.record_estimates) r.estimates.assign(s.estimates.data(), s.estimates.data() + s.estimates.size());
    return r;
  }
};

}  // namespace

Trace run_trial(const Problem& problem, const RunOptions& options, std::uint64_t seed, const std::string& digest) {
  const std::size_t N = problem.n_sensors();
  const std::size_t M = problem.param_dim();
  if (M == 0) throw InvalidArgument("parameter must have at least one component");
  if (options.stride == 0) throw InvalidArgument("recording stride must be positive");

  // NU and NLU run on the separable form; a linear model is embedded.
  const SeparableModel* separable = std::get_if<SeparableModel>(&problem.model);
  const LinearModel* linear = std::get_if<LinearModel>(&problem.model);
  std::optional<SeparableModel> embedded;
  if (options.algorithm == Algorithm::lu) {
    if (!linear) throw InvalidArgument("LU needs a linear observation model");
    if (linear->n_sensors() != N || linear->param_dim() != M)
      throw InvalidArgument("model dimensions do not match the network and parameter");
  } else {
    if (!separable) {
      embedded = embed_linear(*linear);
      separable = &*embedded;
    }
    separable->validate_shape();
    if (separable->n_sensors() != N || separable->param_dim != M)
      throw InvalidArgument("model dimensions do not match the network and parameter");
  }
  if (options.algorithm == Algorithm::nlu && !problem.beta)
    throw InvalidArgument("NLU needs a consensus weight schedule");

  Eigen::VectorXd x0 = problem.initial.size() ? problem.initial : Eigen::VectorXd::Zero(N * M);
  if (static_cast<std::size_t>(x0.size()) != N * M) throw InvalidArgument("initial estimate must have N*M entries");

  Trace trace;
  trace.seed = seed;
  trace.digest = digest;
  trace.algorithm = options.algorithm;
  trace.n_sensors = N;
  trace.param_dim = M;

  EstimatorState state;
  Recorder rec{problem, options, Eigen::VectorXd(), ConsensusProjector(N, M)};
  if (options.algorithm == Algorithm::nlu) {
    state = make_nlu_state(x0, *separable);
    rec.h_theta = separable->h(problem.theta);
  } else {
    state.estimates = x0;
  }

  RngStream graph_rng = make_stream(seed, "graph");
  ObservationStreams obs = make_observation_streams(seed);
  NeighborExchange exchange(problem.network.base(), M, problem.quantizer, seed);
  StepScratch scratch;
  const bool fixed = std::holds_alternative<LinkFailureModel::Fixed>(problem.network.kind());
  const std::size_t raw_dim = linear && options.algorithm == Algorithm::lu ? linear->total_obs_dim()
                                                                          : separable->total_obs_dim();
  std::vector<double> z(raw_dim), J(N * M);

  auto weights = [&](std::uint64_t i) -> std::pair<double, double> {
    const double a = problem.alpha(i);
    switch (options.algorithm) {
      case Algorithm::lu:
      case Algorithm::nu: return {a, a * problem.consensus_weight};
      case Algorithm::nlu: return {a, (*problem.beta)(i)};
    }
    return {a, 0.0};
  };

  {
    const auto [a, w] = weights(0);
    trace.rows.push_back(rec.row(state, a, w));
  }
  try {
    for (std::uint64_t i = 0; i < options.iterations; ++i) {
      std::optional<LaplacianMatrix> sampled;
      if (!fixed) sampled = sample_laplacian(problem.network, graph_rng);
      const LaplacianMatrix& Li = fixed ? problem.network.base() : *sampled;
      const double a = problem.alpha(i);

      if (options.algorithm == Algorithm::lu) {
        linear->sample_into(problem.theta, obs, z);
        lu_step(state, Li, z, *linear, exchange, a, problem.consensus_weight, scratch);
      } else {
        separable->sample(problem.theta, obs, z);
        for (std::size_t n = 0, off = 0; n < N; off += separable->sensor_dims[n], ++n)
          separable->transform(n, {z.data() + off, separable->sensor_dims[n]}, {J.data() + n * M, M});
        if (options.algorithm == Algorithm::nu)
          nu_step(state, Li, J, *separable, exchange, a, problem.consensus_weight, scratch);
        else
          nlu_step(state, Li, J, *separable, exchange, a, (*problem.beta)(i), scratch, options.check_average);
      }

      const std::uint64_t k = state.iteration;
      if (k % options.stride == 0 || k == options.iterations) {
        const auto [na, nw] = weights(k);
        trace.rows.push_back(rec.row(state, na, nw));
      }
    }
  } catch (const DivergenceError& e) {
    trace.divergence = Divergence{e.iteration(), e.what()};
  } catch (const QuantizerOverflow& e) {
    trace.divergence = Divergence{state.iteration + 1, e.what()};
  }
  return trace;
}

std::vector<Trace> run_trials(const Problem& problem, const RunOptions& options,
                              const std::vector<std::uint64_t>& seeds, const std::string& digest,
                              unsigned threads) {
  std::vector<Trace> out(seeds.size());
  if (threads == 0) threads = std::max(1u, std::thread::hardware_concurrency());
  threads = static_cast<unsigned>(std::min<std::size_t>(threads, std::max<std::size_t>(1, seeds.size())));

  std::atomic<std::size_t> next{0};
  std::exception_ptr failure;
  std::mutex failure_mutex;
  auto worker = [&] {
    for (std::size_t k = next++; k < seeds.size(); k = next++) {
      try {
        out[k] = run_trial(problem, options, seeds[k], digest);
      } catch (...) {
        std::lock_guard lock(failure_mutex);
        if (!failure) failure = std::current_exception();
        next = seeds.size();
      }
    }
  };
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (failure) std::rethrow_exception(failure);
  return out;
}

}  // namespace ciest
