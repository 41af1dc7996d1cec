#include "ciest/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "ciest/error.hpp"
#include "ciest/estimators.hpp"

namespace ciest {

Eigen::MatrixXd solve_lyapunov(const Eigen::MatrixXd& A, const Eigen::MatrixXd& C) {
  const Eigen::Index d = A.rows();
  if (A.cols() != d || C.rows() != d || C.cols() != d)
    throw InvalidArgument("Lyapunov solve needs square matrices of equal size");
  auto idx = [d](Eigen::Index i, Eigen::Index j) {
    if (i > j) std::swap(i, j);
    return i * d - i * (i - 1) / 2 + (j - i);
  };
  const Eigen::Index n = d * (d + 1) / 2;
  Eigen::MatrixXd K = Eigen::MatrixXd::Zero(n, n);
  Eigen::VectorXd rhs(n);
  for (Eigen::Index i = 0; i < d; ++i) {
    for (Eigen::Index j = i; j < d; ++j) {
      const Eigen::Index r = idx(i, j);
      // (A S)_ij + (S A^T)_ij = sum_k A_ik S_kj + sum_k S_ik A_jk
      for (Eigen::Index k = 0; k < d; ++k) {
        K(r, idx(k, j)) += A(i, k);
        K(r, idx(i, k)) += A(j, k);
      }
      rhs(r) = -0.5 * (C(i, j) + C(j, i));
    }
  }
  const Eigen::VectorXd s = K.partialPivLu().solve(rhs);
  Eigen::MatrixXd S(d, d);
  for (Eigen::Index i = 0; i < d; ++i)
    for (Eigen::Index j = i; j < d; ++j) S(i, j) = S(j, i) = s(idx(i, j));
  return S;
}

Eigen::MatrixXd quantization_covariance(const LaplacianMatrix& base, const std::vector<double>& activation,
                                        const Eigen::VectorXd& theta, double step) {
  const auto& edges = base.edges();
  if (activation.size() != edges.size()) throw InvalidArgument("need one activation probability per base edge");
  if (!(step > 0.0)) throw InvalidArgument("quantizer step must be positive");
  const std::size_t N = base.n_nodes();
  const auto M = theta.size();
  Eigen::VectorXd per_link(M);
  for (Eigen::Index m = 0; m < M; ++m) {
    const double u = theta[m] / step;
    const double p = u - std::floor(u);
    per_link[m] = step * step * p * (1.0 - p);
  }
  Eigen::VectorXd expected_degree = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(N));
  for (std::size_t e = 0; e < edges.size(); ++e) {
    expected_degree[static_cast<Eigen::Index>(edges[e].first)] += activation[e];
    expected_degree[static_cast<Eigen::Index>(edges[e].second)] += activation[e];
  }
  Eigen::VectorXd diag(static_cast<Eigen::Index>(N) * M);
  for (Eigen::Index n = 0; n < static_cast<Eigen::Index>(N); ++n) diag.segment(n * M, M) = expected_degree[n] * per_link;
  return diag.asDiagonal();
}

namespace {

std::vector<double> activation_probabilities(const LinkFailureModel& network, const AsymptoticVarianceOptions& opt,
                                             bool& sampled) {
  const auto& edges = network.base().edges();
  std::vector<double> p(edges.size());
  sampled = !network.edge_activation(0).has_value();
  if (!sampled) {
    for (std::size_t e = 0; e < edges.size(); ++e) p[e] = *network.edge_activation(e);
    return p;
  }
  RngStream rng = make_stream(opt.seed, "variance-links");
  for (std::size_t t = 0; t < opt.link_draws; ++t)
    for (const auto& edge : sample_active_edges(network, rng))
      p[static_cast<std::size_t>(std::lower_bound(edges.begin(), edges.end(), edge) - edges.begin())] += 1.0;
  for (auto& v : p) v /= static_cast<double>(opt.link_draws);
  return p;
}

}  // namespace

AsymptoticVarianceReport asymptotic_variance(double a, double b, const LinkFailureModel& network,
                                             const LinearModel& model, const Eigen::VectorXd& theta,
                                             const QuantizerSpec& quant, const AsymptoticVarianceOptions& options) {
  if (!(a > 0.0) || !(b > 0.0)) throw InvalidArgument("a and b must be positive");
  const std::size_t N = model.n_sensors();
  const std::size_t M = model.param_dim();
  if (network.n_nodes() != N) throw InvalidArgument("graph and model disagree on the sensor count");
  if (static_cast<std::size_t>(theta.size()) != M) throw InvalidArgument("parameter has the wrong dimension");
  quant.validate();
  if (quant.enabled && !quant.dithered)
    throw InvalidArgument("the asymptotic covariance is only defined for dithered quantization");

  const auto d = static_cast<Eigen::Index>(N * M);
  const auto Mi = static_cast<Eigen::Index>(M);
  const LaplacianMatrix Lbar = mean_laplacian(network);
  const Eigen::MatrixXd K = lu_gain_matrix(b, Lbar, model);

  AsymptoticVarianceReport rep;
  rep.sigma = -a * K + 0.5 * Eigen::MatrixXd::Identity(d, d);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(rep.sigma, Eigen::EigenvaluesOnly);
  rep.stability_margin = eig.eigenvalues().maxCoeff();
  if (rep.stability_margin >= 0.0 && !options.allow_unstable) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> keig(K, Eigen::EigenvaluesOnly);
    throw ValidationError("normality-scale",
                            "covariance recursion is unstable: need a > 1/(2 lambda_min(b Lbar (x) I + D_H)) = " +
                                std::to_string(0.5 / keig.eigenvalues().minCoeff()) + ", got a = " +
                                std::to_string(a));
  }

  const Eigen::MatrixXd Dbar = model.transpose_block_diagonal();
  rep.s_zeta = Dbar * model.noise_cov() * Dbar.transpose();

  rep.s_h = Eigen::MatrixXd::Zero(d, d);
  if (const auto& stds = model.matrix_noise_std()) {
    for (std::size_t n = 0; n < N; ++n) {
      const auto& s = (*stds)[n];
      Eigen::VectorXd var_row = (s.array().square().matrix() * theta.array().square().matrix());
      const auto& H = model.mean_matrix(n);
      rep.s_h.block(static_cast<Eigen::Index>(n) * Mi, static_cast<Eigen::Index>(n) * Mi, Mi, Mi) =
          H.transpose() * var_row.asDiagonal() * H;
    }
  } else if (model.has_matrix_noise()) {
    // Sample Dbar Htilde theta; its mean is zero, so average the outer products.
    rep.s_h_monte_carlo = true;
    RngStream rng = make_stream(options.seed, "variance-matrix");
    Eigen::MatrixXd sum = Eigen::MatrixXd::Zero(d, d), sum2 = sum;
    Eigen::VectorXd u(d);
    for (std::size_t t = 0; t < options.matrix_noise_draws; ++t) {
      const auto tilde = model.draw_matrix_noise(rng);
      for (std::size_t n = 0; n < N; ++n)
        u.segment(static_cast<Eigen::Index>(n) * Mi, Mi) = model.mean_matrix(n).transpose() * (tilde[n] * theta);
      const Eigen::MatrixXd outer = u * u.transpose();
      sum += outer;
      sum2 += outer.cwiseAbs2();
    }
    const double cnt = static_cast<double>(options.matrix_noise_draws);
    rep.s_h = sum / cnt;
    const Eigen::MatrixXd var = (sum2 / cnt - rep.s_h.cwiseAbs2()).cwiseMax(0.0);
    rep.s_h_std_error = std::sqrt(var.maxCoeff() / cnt);
  }

  rep.s_q = Eigen::MatrixXd::Zero(d, d);
  if (quant.enabled) {
    bool sampled = false;
    const auto p = activation_probabilities(network, options, sampled);
    rep.s_q = quantization_covariance(network.base(), p, theta, quant.step);
    rep.s_q_monte_carlo = sampled;
  }

  rep.s0 = rep.s_h + rep.s_zeta + b * b * rep.s_q;
  rep.s = solve_lyapunov(rep.sigma, a * a * rep.s0);
  rep.lyapunov_residual =
      (rep.sigma * rep.s + rep.s * rep.sigma.transpose() + a * a * rep.s0).cwiseAbs().maxCoeff();
  for (std::size_t n = 0; n < N; ++n)
    rep.sensor_blocks.push_back(rep.s.block(static_cast<Eigen::Index>(n) * Mi, static_cast<Eigen::Index>(n) * Mi, Mi, Mi));
  rep.trace_over_n = rep.s.trace() / static_cast<double>(N);
  return rep;
}

ScalarExampleSummary scalar_example_summary(std::size_t n, double h, double sigma, double a, double b,
                                            const LaplacianMatrix& mean_laplacian) {
  if (n == 0 || mean_laplacian.n_nodes() != n) throw InvalidArgument("network size must match N");
  if (h == 0.0 || !(sigma > 0.0) || !(b > 0.0)) throw InvalidArgument("need h != 0, sigma > 0 and b > 0");
  if (!(a > 1.0 / (2.0 * h * h)))
    throw ValidationError("normality-scale", "scalar example needs a > 1/(2h^2) = " +
                                                   std::to_string(1.0 / (2.0 * h * h)) + ", got a = " +
                                                   std::to_string(a));
  const Eigen::VectorXd lambda = mean_laplacian.eigenvalues();
  const double N = static_cast<double>(n);
  double sum = 0.0;
  for (Eigen::Index k = 0; k < lambda.size(); ++k) sum += 1.0 / (2.0 * a * b * lambda[k] + 2.0 * a * h * h - 1.0);
  ScalarExampleSummary s;
  s.s_lu = a * a * sigma * sigma * h * h / N * sum;
  s.s_lu_star = sigma * sigma / (N * h * h);
  s.s_c = sigma * sigma / (N * h * h);
  return s;
}

double evaluate_lyapunov(LyapunovKind kind, const Eigen::VectorXd& x, const Eigen::VectorXd& theta, double weight,
                         const LaplacianMatrix& mean_laplacian, const LinearModel* model) {
  const std::size_t N = mean_laplacian.n_nodes();
  const auto M = static_cast<std::size_t>(theta.size());
  if (static_cast<std::size_t>(x.size()) != N * M) throw InvalidArgument("state length must be N*M");
  const Eigen::VectorXd e = x - stack_copies(theta, N);
  if (kind == LyapunovKind::nu) return e.squaredNorm();
  if (!model) throw InvalidArgument("the LU Lyapunov function needs the linear model");
  if (model->n_sensors() != N || model->param_dim() != M) throw InvalidArgument("model dimensions do not match");
  Eigen::VectorXd Ke = weight * apply_kron(mean_laplacian, M, e);
  std::vector<double> block(M);
  for (std::size_t n = 0; n < N; ++n) {
    model->gram_apply(n, e.data() + n * M, block.data());
    for (std::size_t k = 0; k < M; ++k) Ke[static_cast<Eigen::Index>(n * M + k)] += block[k];
  }
  return e.dot(Ke);
}

EnvelopeCheck expectation_envelope(const WeightSchedule& alpha, double b, const LaplacianMatrix& mean_laplacian,
                                   const LinearModel& model, const Eigen::VectorXd& theta, const Eigen::VectorXd& x0,
                                   std::uint64_t iterations, std::uint64_t stride) {
  const std::size_t N = model.n_sensors();
  const std::size_t M = model.param_dim();
  if (stride == 0) throw InvalidArgument("stride must be positive");
  if (static_cast<std::size_t>(x0.size()) != N * M) throw InvalidArgument("initial state must have N*M entries");
  const auto gain = check_lu_gain_matrix(b, mean_laplacian, model);
  if (!gain.positive_definite) throw InvalidArgument("gain matrix is not positive definite; no envelope exists");

  // Every noise source at its mean: no observation noise, Lbar, no quantization.
  std::vector<Eigen::MatrixXd> H;
  for (std::size_t n = 0; n < N; ++n) H.push_back(model.mean_matrix(n));
  const auto obs_dim = static_cast<Eigen::Index>(model.total_obs_dim());
  const LinearModel mean_model(M, std::move(H), Eigen::MatrixXd::Zero(obs_dim, obs_dim));
  ObservationStreams streams = make_observation_streams(0);
  std::vector<double> z(model.total_obs_dim());
  mean_model.sample_into(theta, streams, z);
  NeighborExchange exchange(mean_laplacian, M, QuantizerSpec{}, 0);
  StepScratch scratch;

  EnvelopeCheck out;
  out.lambda_min = gain.lambda_min;
  out.lambda_max = gain.lambda_max;
  while (alpha(out.start_index) > 1.0 / gain.lambda_max) ++out.start_index;

  const Eigen::VectorXd truth = stack_copies(theta, N);
  EstimatorState state{0, x0, std::nullopt};
  double e0 = 0.0, alpha_sum = 0.0, prev_v = std::numeric_limits<double>::infinity();
  for (std::uint64_t i = 0;; ++i) {
    const double err = (state.estimates - truth).norm();
    if (i == out.start_index) e0 = err;
    double env = std::numeric_limits<double>::quiet_NaN();
    if (i >= out.start_index) {
      env = std::exp(-gain.lambda_min * alpha_sum) * e0;
      const double v = evaluate_lyapunov(LyapunovKind::lu, state.estimates, theta, b, mean_laplacian, &model);
      if (v > prev_v * (1.0 + 1e-12) + 1e-300) out.lyapunov_decreasing = false;
      prev_v = v;
      if (err > env + 1e-12 * std::max(1.0, e0)) out.passed = false;
      if (env > 0.0) out.worst_ratio = std::max(out.worst_ratio, err / env);
      alpha_sum += alpha(i);
    }
    if (i % stride == 0 || i == iterations) {
      out.iters.push_back(i);
      out.error.push_back(err);
      out.envelope.push_back(env);
    }
    if (i == iterations) break;
    lu_step(state, mean_laplacian, z, mean_model, exchange, alpha(i), b, scratch);
  }
  return out;
}

double quantile(std::vector<double> values, double q) {
  if (values.empty()) throw InvalidArgument("quantile of an empty sample");
  std::sort(values.begin(), values.end());
  const double pos = q * static_cast<double>(values.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, values.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  if (frac == 0.0 || std::isinf(values[hi])) return values[lo];
  return values[lo] + frac * (values[hi] - values[lo]);
}

namespace {

double loglog_slope(const std::vector<std::uint64_t>& iters, const std::vector<double>& y, std::uint64_t from) {
  double sx = 0, sy = 0, sxx = 0, sxy = 0;
  std::size_t n = 0;
  for (std::size_t k = 0; k < iters.size(); ++k) {
    if (iters[k] < std::max<std::uint64_t>(from, 1) || !(y[k] > 0.0)) continue;
    const double lx = std::log(static_cast<double>(iters[k]));
    const double ly = std::log(y[k]);
    sx += lx;
    sy += ly;
    sxx += lx * lx;
    sxy += lx * ly;
    ++n;
  }
  if (n < 2) return std::numeric_limits<double>::quiet_NaN();
  const double cnt = static_cast<double>(n);
  const double den = cnt * sxx - sx * sx;
  return den == 0.0 ? std::numeric_limits<double>::quiet_NaN() : (cnt * sxy - sx * sy) / den;
}

}  // namespace

DiagnosticsReport mc_diagnostics(const std::vector<Trace>& traces, const Eigen::VectorXd& theta,
                                 const DiagnosticsRequest& request) {
  if (traces.empty()) throw InvalidArgument("diagnostics need at least one trace");
  std::vector<const Trace*> ok;
  for (const auto& t : traces) {
    if (t.rows.empty()) throw InvalidArgument("trace for seed " + std::to_string(t.seed) + " has no rows");
    if (!t.divergence) ok.push_back(&t);
  }
  DiagnosticsReport rep;

  if (request.consistency) {
    ConsistencyStats c;
    c.trials = traces.size();
    std::vector<double> init, fin, ratio;
    for (const auto& t : traces) {
      const double e0 = t.max_error(t.rows.front());
      const double e1 = t.divergence ? std::numeric_limits<double>::infinity() : t.max_error(t.rows.back());
      if (t.divergence) ++c.diverged;
      init.push_back(e0);
      fin.push_back(e1);
      ratio.push_back(e0 > 0.0 ? e1 / e0 : (e1 == 0.0 ? 0.0 : std::numeric_limits<double>::infinity()));
    }
    c.median_initial_error = quantile(init, 0.5);
    c.median_final_error = quantile(fin, 0.5);
    c.p90_final_error = quantile(fin, 0.9);
    c.median_ratio = quantile(ratio, 0.5);
    c.p90_ratio = quantile(ratio, 0.9);
    rep.consistency = c;
  }

  const std::size_t rows = ok.empty() ? 0 : ok.front()->rows.size();
  for (const auto* t : ok) {
    if (t->rows.size() != rows) throw InvalidArgument("traces were recorded on different iteration grids");
    for (std::size_t r = 0; r < rows; ++r)
      if (t->rows[r].iter != ok.front()->rows[r].iter)
        throw InvalidArgument("traces were recorded on different iteration grids");
  }

  if (request.mse && !ok.empty()) {
    MseStats m;
    for (std::size_t r = 0; r < rows; ++r) {
      double acc = 0.0;
      for (const auto* t : ok) {
        double s = 0.0;
        for (double e : t->rows[r].sensor_err) s += e * e;
        acc += s / static_cast<double>(t->rows[r].sensor_err.size());
      }
      m.iters.push_back(ok.front()->rows[r].iter);
      m.mse.push_back(acc / static_cast<double>(ok.size()));
    }
    m.slope = loglog_slope(m.iters, m.mse, 1);
    m.slope_final_decade = loglog_slope(m.iters, m.mse, m.iters.back() / 10);
    rep.mse = m;
  }

  if (request.consensus && !ok.empty()) {
    ConsensusStats c;
    for (std::size_t r = 0; r < rows; ++r) {
      std::vector<double> gaps;
      for (const auto* t : ok) gaps.push_back(t->rows[r].consensus_gap);
      c.iters.push_back(ok.front()->rows[r].iter);
      c.median_gap.push_back(quantile(gaps, 0.5));
      if (r + 1 == rows) {
        c.final_q10 = quantile(gaps, 0.1);
        c.final_q50 = quantile(gaps, 0.5);
        c.final_q90 = quantile(gaps, 0.9);
      }
    }
    rep.consensus = c;
  }

  if (request.normality) {
    if (ok.size() < kMinNormalityTraces)
      throw InvalidArgument("normality diagnostics need at least " + std::to_string(kMinNormalityTraces) +
                            " non-diverged traces, got " + std::to_string(ok.size()));
    const auto N = ok.front()->n_sensors;
    const auto M = static_cast<Eigen::Index>(theta.size());
    if (ok.front()->param_dim != static_cast<std::size_t>(M)) throw InvalidArgument("parameter dimension mismatch");
    if (!request.reference_blocks.empty() && request.reference_blocks.size() != N)
      throw InvalidArgument("need one reference block per sensor");
    NormalityStats ns;
    ns.iteration = ok.front()->rows.back().iter;
    const double root = std::sqrt(static_cast<double>(ns.iteration));
    const double T = static_cast<double>(ok.size());
    bool all_flat = true;
    for (std::size_t n = 0; n < N; ++n) {
      Eigen::MatrixXd samples(static_cast<Eigen::Index>(ok.size()), M);
      for (std::size_t k = 0; k < ok.size(); ++k) {
        const auto& est = ok[k]->rows.back().estimates;
        if (est.size() != N * static_cast<std::size_t>(M))
          throw InvalidArgument("normality diagnostics need traces recorded with raw estimates");
        for (Eigen::Index m = 0; m < M; ++m)
          samples(static_cast<Eigen::Index>(k), m) = root * (est[n * static_cast<std::size_t>(M) + static_cast<std::size_t>(m)] - theta[m]);
      }
      const Eigen::RowVectorXd mean = samples.colwise().mean();
      const Eigen::MatrixXd centered = samples.rowwise() - mean;
      const Eigen::MatrixXd cov = centered.transpose() * centered / (T - 1.0);
      ns.empirical.push_back(cov);
      std::vector<double> skew, kurt;
      for (Eigen::Index m = 0; m < M; ++m) {
        const double m2 = centered.col(m).array().square().mean();
        if (m2 > 0.0) all_flat = false;
        const double m3 = centered.col(m).array().cube().mean();
        const double m4 = centered.col(m).array().square().square().mean();
        skew.push_back(m2 > 0.0 ? m3 / std::pow(m2, 1.5) : 0.0);
        kurt.push_back(m2 > 0.0 ? m4 / (m2 * m2) - 3.0 : 0.0);
      }
      ns.skewness.push_back(std::move(skew));
      ns.excess_kurtosis.push_back(std::move(kurt));
      if (!request.reference_blocks.empty()) {
        const auto& ref = request.reference_blocks[n];
        const double denom = ref.norm();
        const double dev = denom > 0.0 ? (cov - ref).norm() / denom
                                       : ((cov - ref).norm() == 0.0 ? 0.0 : std::numeric_limits<double>::infinity());
        ns.relative_frobenius.push_back(dev);
        ns.max_relative_frobenius = std::max(ns.max_relative_frobenius, dev);
      }
    }
    ns.degenerate = all_flat;
    rep.normality = ns;
  }
  return rep;
}

}  // namespace ciest
