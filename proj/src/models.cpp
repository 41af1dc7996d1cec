#include "ciest/models.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>

#include "ciest/error.hpp"

namespace ciest {

ObservationStreams make_observation_streams(std::uint64_t seed) {
  return {make_stream(seed, "observation"), make_stream(seed, "observation-matrix")};
}

LinearModel::LinearModel(std::size_t param_dim, std::vector<Eigen::MatrixXd> mean_matrices,
                         Eigen::MatrixXd noise_cov, NoiseFactorization factorization)
    : m_(param_dim), H_(std::move(mean_matrices)), cov_(std::move(noise_cov)) {
  if (m_ == 0) throw InvalidArgument("parameter dimension must be positive");
  if (H_.empty()) throw InvalidArgument("linear model needs at least one sensor");
  offsets_.push_back(0);
  for (std::size_t n = 0; n < H_.size(); ++n) {
    const auto& H = H_[n];
    if (static_cast<std::size_t>(H.cols()) != m_ || H.rows() == 0)
      throw InvalidArgument("sensor " + std::to_string(n) + " matrix must be M_n x " +
                            std::to_string(m_) + " with M_n >= 1");
    if (!H.allFinite()) throw InvalidArgument("sensor " + std::to_string(n) + " matrix is not finite");
    HtH_.push_back(H.transpose() * H);
    Ht_.push_back(H.transpose());
    offsets_.push_back(offsets_.back() + static_cast<std::size_t>(H.rows()));
  }
  const auto d = static_cast<Eigen::Index>(total_obs_dim());
  if (cov_.rows() != d || cov_.cols() != d)
    throw InvalidArgument("noise covariance must be " + std::to_string(d) + "x" + std::to_string(d));
  const double scale = std::max(1.0, cov_.cwiseAbs().maxCoeff());
  if (!cov_.allFinite() || (cov_ - cov_.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale)
    throw InvalidArgument("noise covariance must be finite and symmetric");

  diagonal_noise_ = (cov_ - Eigen::MatrixXd(cov_.diagonal().asDiagonal())).cwiseAbs().maxCoeff() == 0.0;
  if (diagonal_noise_) {
    if (cov_.diagonal().minCoeff() < 0.0)
      throw InvalidArgument("noise covariance has a negative variance");
    noise_std_ = cov_.diagonal().cwiseSqrt();
    return;
  }
  if (factorization == NoiseFactorization::cholesky) {
    Eigen::LLT<Eigen::MatrixXd> llt(cov_);
    if (llt.info() != Eigen::Success)
      throw InvalidArgument(
          "noise covariance is not positive definite; use the eigen factorization for singular "
          "covariances");
    noise_factor_ = llt.matrixL();
  } else {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov_);
    if (eig.eigenvalues().minCoeff() < -1e-10 * scale)
      throw InvalidArgument("noise covariance is not positive semidefinite");
    noise_factor_ = eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
  }
}

LinearModel& LinearModel::with_matrix_noise_std(std::vector<Eigen::MatrixXd> entry_std) {
  if (entry_std.size() != H_.size()) throw InvalidArgument("need one std matrix per sensor");
  for (std::size_t n = 0; n < H_.size(); ++n) {
    if (entry_std[n].rows() != H_[n].rows() || entry_std[n].cols() != H_[n].cols())
      throw InvalidArgument("matrix-noise std for sensor " + std::to_string(n) + " has wrong shape");
    if (!entry_std[n].allFinite() || entry_std[n].minCoeff() < 0.0)
      throw InvalidArgument("matrix-noise std must be finite and nonnegative");
  }
  entry_std_ = std::move(entry_std);
  matrix_sampler_ = nullptr;
  return *this;
}

LinearModel& LinearModel::with_matrix_noise_sampler(MatrixNoiseSampler sampler) {
  matrix_sampler_ = std::move(sampler);
  entry_std_.reset();
  return *this;
}

void LinearModel::gram_apply(std::size_t n, const double* x, double* out) const {
  const auto& G = HtH_[n];
  for (std::size_t r = 0; r < m_; ++r) {
    double acc = 0.0;
    for (std::size_t c = 0; c < m_; ++c) acc += G(r, c) * x[c];
    out[r] = acc;
  }
}

void LinearModel::project_obs(std::size_t n, const double* z, double* out) const {
  const auto& Ht = Ht_[n];
  const auto rows = static_cast<std::size_t>(Ht.cols());
  for (std::size_t r = 0; r < m_; ++r) {
    double acc = 0.0;
    for (std::size_t c = 0; c < rows; ++c) acc += Ht(r, c) * z[c];
    out[r] = acc;
  }
}

std::vector<Eigen::MatrixXd> LinearModel::draw_matrix_noise(RngStream& rng) const {
  if (matrix_sampler_) {
    auto draw = matrix_sampler_(rng);
    if (draw.size() != H_.size()) throw InvalidArgument("matrix-noise sampler returned wrong sensor count");
    for (std::size_t n = 0; n < H_.size(); ++n)
      if (draw[n].rows() != H_[n].rows() || draw[n].cols() != H_[n].cols())
        throw InvalidArgument("matrix-noise sampler returned wrong shape for sensor " + std::to_string(n));
    return draw;
  }
  std::vector<Eigen::MatrixXd> draw;
  draw.reserve(H_.size());
  if (!entry_std_) {
    for (const auto& H : H_) draw.push_back(Eigen::MatrixXd::Zero(H.rows(), H.cols()));
    return draw;
  }
  std::normal_distribution<double> gauss;
  for (const auto& s : *entry_std_) {
    Eigen::MatrixXd d(s.rows(), s.cols());
    for (Eigen::Index r = 0; r < s.rows(); ++r)
      for (Eigen::Index c = 0; c < s.cols(); ++c) d(r, c) = s(r, c) * gauss(rng);
    draw.push_back(std::move(d));
  }
  return draw;
}

void LinearModel::sample_into(const Eigen::VectorXd& theta, ObservationStreams& streams,
                              std::span<double> z) const {
  if (static_cast<std::size_t>(theta.size()) != m_ || z.size() != total_obs_dim())
    throw InvalidArgument("observation buffer or parameter has the wrong length");
  std::vector<Eigen::MatrixXd> tilde;
  if (has_matrix_noise()) tilde = draw_matrix_noise(streams.matrix);
  for (std::size_t n = 0; n < H_.size(); ++n) {
    const auto& H = H_[n];
    for (Eigen::Index r = 0; r < H.rows(); ++r) {
      double acc = 0.0;
      for (std::size_t c = 0; c < m_; ++c) acc += H(r, c) * theta[c];
      if (!tilde.empty())
        for (std::size_t c = 0; c < m_; ++c) acc += tilde[n](r, c) * theta[c];
      z[offsets_[n] + static_cast<std::size_t>(r)] = acc;
    }
  }
  std::normal_distribution<double> gauss;
  if (diagonal_noise_) {
    for (std::size_t k = 0; k < z.size(); ++k) z[k] += noise_std_[k] * gauss(streams.observation);
  } else {
    Eigen::VectorXd w(noise_factor_.cols());
    for (Eigen::Index k = 0; k < w.size(); ++k) w[k] = gauss(streams.observation);
    const Eigen::VectorXd noise = noise_factor_ * w;
    for (std::size_t k = 0; k < z.size(); ++k) z[k] += noise[static_cast<Eigen::Index>(k)];
  }
}

Eigen::MatrixXd LinearModel::gram_block_diagonal() const {
  const auto N = static_cast<Eigen::Index>(H_.size());
  const auto M = static_cast<Eigen::Index>(m_);
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(N * M, N * M);
  for (Eigen::Index n = 0; n < N; ++n) D.block(n * M, n * M, M, M) = HtH_[n];
  return D;
}

Eigen::MatrixXd LinearModel::transpose_block_diagonal() const {
  const auto M = static_cast<Eigen::Index>(m_);
  Eigen::MatrixXd D = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(H_.size()) * M,
                                            static_cast<Eigen::Index>(total_obs_dim()));
  for (std::size_t n = 0; n < H_.size(); ++n)
    D.block(static_cast<Eigen::Index>(n) * M, static_cast<Eigen::Index>(offsets_[n]), M,
            H_[n].rows()) = Ht_[n];
  return D;
}

std::size_t SeparableModel::total_obs_dim() const {
  return std::accumulate(sensor_dims.begin(), sensor_dims.end(), std::size_t{0});
}

std::size_t SeparableModel::obs_offset(std::size_t n) const {
  return std::accumulate(sensor_dims.begin(), sensor_dims.begin() + static_cast<std::ptrdiff_t>(n),
                         std::size_t{0});
}

Eigen::VectorXd SeparableModel::sensor_mean_at(std::size_t n, const Eigen::VectorXd& theta) const {
  Eigen::VectorXd out(param_dim);
  sensor_mean(n, std::span<const double>(theta.data(), param_dim), std::span<double>(out.data(), param_dim));
  return out;
}

Eigen::VectorXd SeparableModel::average_sensor_mean(const Eigen::VectorXd& theta) const {
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(param_dim);
  for (std::size_t n = 0; n < n_sensors(); ++n) acc += sensor_mean_at(n, theta);
  return acc / static_cast<double>(n_sensors());
}

Eigen::VectorXd SeparableModel::h(const Eigen::VectorXd& theta) const {
  return aggregate ? aggregate(theta) : average_sensor_mean(theta);
}

std::optional<double> SeparableModel::max_lipschitz() const {
  if (!lipschitz || lipschitz->empty()) return std::nullopt;
  return *std::max_element(lipschitz->begin(), lipschitz->end());
}

void SeparableModel::validate_shape() const {
  if (param_dim == 0) throw InvalidArgument("separable model '" + name + "' has zero parameter dimension");
  if (sensor_dims.empty()) throw InvalidArgument("separable model '" + name + "' has no sensors");
  if (!sample || !transform || !sensor_mean)
    throw InvalidArgument("separable model '" + name + "' is missing sampler, g_n or h_n");
  if (!inverse) throw InvalidArgument("separable model '" + name + "' must supply h^{-1}");
  if (lipschitz && lipschitz->size() != n_sensors())
    throw InvalidArgument("separable model '" + name + "' declares the wrong number of Lipschitz constants");
}

ObservabilityReport check_observability(const LinearModel& model) {
  const auto M = static_cast<Eigen::Index>(model.param_dim());
  Eigen::MatrixXd G = Eigen::MatrixXd::Zero(M, M);
  for (std::size_t n = 0; n < model.n_sensors(); ++n)
    G += model.mean_matrix(n).transpose() * model.mean_matrix(n);
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(G);
  const auto& sv = svd.singularValues();
  const double smax = sv(0);
  const double smin = sv(sv.size() - 1);
  return {G, smax > 0.0 && smin > 1e-10 * smax, smin, smax};
}

Eigen::MatrixXd lu_gain_matrix(double b, const LaplacianMatrix& mean_laplacian, const LinearModel& model) {
  const std::size_t N = mean_laplacian.n_nodes();
  const std::size_t M = model.param_dim();
  if (N != model.n_sensors()) throw InvalidArgument("graph and model disagree on the sensor count");
  Eigen::MatrixXd K = model.gram_block_diagonal();
  for (std::size_t r = 0; r < N; ++r)
    for (std::size_t c = 0; c < N; ++c) {
      const double v = b * mean_laplacian(r, c);
      if (v == 0.0) continue;
      for (std::size_t k = 0; k < M; ++k)
        K(static_cast<Eigen::Index>(r * M + k), static_cast<Eigen::Index>(c * M + k)) += v;
    }
  return K;
}

GainMatrixReport check_lu_gain_matrix(double b, const LaplacianMatrix& mean_laplacian,
                                      const LinearModel& model) {
  if (!(b > 0.0)) throw InvalidArgument("consensus weight b must be positive");
  const Eigen::MatrixXd K = lu_gain_matrix(b, mean_laplacian, model);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(K, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues()(0);
  const double hi = eig.eigenvalues()(eig.eigenvalues().size() - 1);
  const bool pd = lo > 1e-12 * std::max(1.0, hi);
  const bool connected = mean_laplacian.n_nodes() == 1 || algebraic_connectivity(mean_laplacian) > 0.0;
  if (!pd && connected && check_observability(model).full_rank)
    throw Error("gain matrix is not positive definite although the mean graph is connected and "
                "the model is observable");
  return {pd, lo, hi};
}

Eigen::VectorXd observe_linear(const LinearModel& model, const Eigen::VectorXd& theta,
                               ObservationStreams& streams) {
  if (!theta.allFinite()) throw InvalidArgument("parameter must be finite");
  Eigen::VectorXd z(model.total_obs_dim());
  model.sample_into(theta, streams, std::span<double>(z.data(), z.size()));
  return z;
}

Eigen::VectorXd observe_separable(const SeparableModel& model, const Eigen::VectorXd& theta,
                                  ObservationStreams& streams) {
  const std::size_t M = model.param_dim;
  Eigen::VectorXd z(model.total_obs_dim());
  model.sample(theta, streams, std::span<double>(z.data(), z.size()));
  Eigen::VectorXd J(model.n_sensors() * M);
  std::size_t off = 0;
  for (std::size_t n = 0; n < model.n_sensors(); ++n) {
    model.transform(n, std::span<const double>(z.data() + off, model.sensor_dims[n]),
                    std::span<double>(J.data() + n * M, M));
    off += model.sensor_dims[n];
  }
  return J;
}

double nu_beta_threshold(double K, double gamma, double lambda2) {
  if (!(K > 0.0) || !(gamma > 0.0) || !(lambda2 > 0.0))
    throw InvalidArgument("Lipschitz constant, monotonicity constant and lambda_2 must be positive");
  return (K * K + K * gamma) / (gamma * lambda2);
}

SeparableModel embed_linear(const LinearModel& model) {
  auto shared = std::make_shared<const LinearModel>(model);
  const ObservabilityReport obs = check_observability(model);
  if (!obs.full_rank) throw InvalidArgument("linear model is not observable; h(theta) = G theta / N is not invertible");
  const auto N = static_cast<double>(model.n_sensors());
  const Eigen::MatrixXd G = obs.gram;
  const Eigen::MatrixXd G_inv = G.inverse();

  SeparableModel s;
  s.name = "linear-embedding";
  s.param_dim = model.param_dim();
  for (std::size_t n = 0; n < model.n_sensors(); ++n) s.sensor_dims.push_back(model.sensor_dim(n));
  s.sample = [shared](const Eigen::VectorXd& theta, ObservationStreams& streams, std::span<double> z) {
    shared->sample_into(theta, streams, z);
  };
  s.transform = [shared](std::size_t n, std::span<const double> z, std::span<double> out) {
    shared->project_obs(n, z.data(), out.data());
  };
  s.sensor_mean = [shared](std::size_t n, std::span<const double> theta, std::span<double> out) {
    shared->gram_apply(n, theta.data(), out.data());
  };
  s.aggregate = [G, N](const Eigen::VectorXd& theta) -> Eigen::VectorXd { return G * theta / N; };
  s.inverse = [G_inv, N](const Eigen::VectorXd& y) -> Eigen::VectorXd { return N * (G_inv * y); };

  std::vector<double> k;
  for (std::size_t n = 0; n < model.n_sensors(); ++n) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(model.mean_matrix(n).transpose() * model.mean_matrix(n),
                                                       Eigen::EigenvaluesOnly);
    // Lipschitz constants must be positive; an all-zero sensor still gets a tiny one.
    k.push_back(std::max(eig.eigenvalues().maxCoeff(), 1e-300));
  }
  s.lipschitz = std::move(k);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> geig(G, Eigen::EigenvaluesOnly);
  s.strong_monotonicity = geig.eigenvalues()(0) / N;
  s.sensor_monotone = true;
  return s;
}

LinearModel scalar_network_model(std::size_t n_sensors, double gain, double noise_std) {
  if (gain == 0.0) throw InvalidArgument("observation gain must be nonzero");
  if (!(noise_std > 0.0)) throw InvalidArgument("noise standard deviation must be positive");
  std::vector<Eigen::MatrixXd> H(n_sensors, Eigen::MatrixXd::Constant(1, 1, gain));
  const auto n = static_cast<Eigen::Index>(n_sensors);
  return LinearModel(1, std::move(H), noise_std * noise_std * Eigen::MatrixXd::Identity(n, n));
}

LinearModel partial_observation_model(std::size_t n_sensors, std::size_t param_dim, double noise_std) {
  if (!(noise_std > 0.0)) throw InvalidArgument("noise standard deviation must be positive");
  std::vector<Eigen::MatrixXd> H;
  for (std::size_t n = 0; n < n_sensors; ++n) {
    Eigen::MatrixXd row = Eigen::MatrixXd::Zero(1, static_cast<Eigen::Index>(param_dim));
    row(0, static_cast<Eigen::Index>(n % param_dim)) = 1.0;
    H.push_back(std::move(row));
  }
  const auto n = static_cast<Eigen::Index>(n_sensors);
  return LinearModel(param_dim, std::move(H), noise_std * noise_std * Eigen::MatrixXd::Identity(n, n));
}

SeparableModel cubic_model(std::size_t n_sensors, double noise_std) {
  if (n_sensors == 0) throw InvalidArgument("cubic model needs at least one sensor");
  if (!(noise_std >= 0.0)) throw InvalidArgument("noise standard deviation must be nonnegative");
  SeparableModel s;
  s.name = "cubic";
  s.param_dim = 1;
  s.sensor_dims.assign(n_sensors, 1);
  s.sample = [noise_std](const Eigen::VectorXd& theta, ObservationStreams& streams, std::span<double> z) {
    std::normal_distribution<double> gauss;
    const double mean = theta[0] * theta[0] * theta[0];
    for (auto& v : z) v = mean + noise_std * gauss(streams.observation);
  };
  s.transform = [](std::size_t, std::span<const double> z, std::span<double> out) { out[0] = z[0]; };
  s.sensor_mean = [](std::size_t, std::span<const double> theta, std::span<double> out) {
    out[0] = theta[0] * theta[0] * theta[0];
  };
  s.inverse = [](const Eigen::VectorXd& y) -> Eigen::VectorXd {
    return Eigen::VectorXd::Constant(1, std::cbrt(y[0]));
  };
  // theta^3 is monotone but neither globally Lipschitz nor strongly monotone.
  s.sensor_monotone = true;
  return s;
}

namespace {

Eigen::VectorXd random_point(RngStream& rng, std::size_t dim, double radius) {
  Eigen::VectorXd p(dim);
  for (std::size_t k = 0; k < dim; ++k) p[k] = uniform_symmetric(rng, radius);
  return p;
}

}  // namespace

SampledCheck check_round_trip(const SeparableModel& model, const std::vector<Eigen::VectorXd>& points,
                              double tol) {
  double worst = 0.0;
  for (const auto& p : points) {
    const double err = (model.inverse(model.h(p)) - p).norm();
    worst = std::max(worst, err);
  }
  return {worst <= tol, worst, "max |h^{-1}(h(theta)) - theta| = " + std::to_string(worst)};
}

SampledCheck check_aggregate_consistency(const SeparableModel& model,
                                         const std::vector<Eigen::VectorXd>& points, double tol) {
  double worst = 0.0;
  for (const auto& p : points)
    worst = std::max(worst, (model.h(p) - model.average_sensor_mean(p)).norm());
  return {worst <= tol, worst, "max |h - avg h_n| = " + std::to_string(worst)};
}

SampledCheck check_lipschitz(const SeparableModel& model, RngStream& rng, std::size_t pairs, double radius) {
  if (!model.lipschitz) return {false, 0.0, "no Lipschitz constants declared"};
  double worst = 0.0;  // max ||dh|| / (k_n ||dtheta||)
  for (std::size_t t = 0; t < pairs; ++t) {
    const Eigen::VectorXd a = random_point(rng, model.param_dim, radius);
    const Eigen::VectorXd b = random_point(rng, model.param_dim, radius);
    const double gap = (a - b).norm();
    if (gap == 0.0) continue;
    for (std::size_t n = 0; n < model.n_sensors(); ++n) {
      const double diff = (model.sensor_mean_at(n, a) - model.sensor_mean_at(n, b)).norm();
      worst = std::max(worst, diff / ((*model.lipschitz)[n] * gap));
    }
  }
  return {worst <= 1.0 + 1e-12, worst, "worst ratio ||h_n(a)-h_n(b)|| / (k_n ||a-b||) = " + std::to_string(worst)};
}

SampledCheck check_monotonicity(const SeparableModel& model, RngStream& rng, std::size_t pairs, double radius) {
  double worst = std::numeric_limits<double>::infinity();  // min observed ratio
  const bool strong = model.strong_monotonicity.has_value();
  for (std::size_t t = 0; t < pairs; ++t) {
    const Eigen::VectorXd a = random_point(rng, model.param_dim, radius);
    const Eigen::VectorXd b = random_point(rng, model.param_dim, radius);
    const double gap2 = (a - b).squaredNorm();
    if (gap2 == 0.0) continue;
    if (strong) {
      worst = std::min(worst, (a - b).dot(model.h(a) - model.h(b)) / gap2);
    } else {
      for (std::size_t n = 0; n < model.n_sensors(); ++n)
        worst = std::min(worst, (a - b).dot(model.sensor_mean_at(n, a) - model.sensor_mean_at(n, b)) / gap2);
    }
  }
  const double need = strong ? *model.strong_monotonicity : 0.0;
  const bool ok = worst >= need - 1e-12 * std::max(1.0, std::abs(need));
  return {ok, worst, "min (a-b)^T(h(a)-h(b))/||a-b||^2 = " + std::to_string(worst)};
}

SampledCheck check_transform_mean(const SeparableModel& model, const Eigen::VectorXd& theta,
                                  ObservationStreams& streams, std::size_t draws, double se_multiple) {
  const std::size_t NM = model.n_sensors() * model.param_dim;
  Eigen::VectorXd sum = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(NM));
  Eigen::VectorXd sum2 = sum;
  for (std::size_t d = 0; d < draws; ++d) {
    const Eigen::VectorXd J = observe_separable(model, theta, streams);
    sum += J;
    sum2 += J.cwiseAbs2();
  }
  const double cnt = static_cast<double>(draws);
  const Eigen::VectorXd mean = sum / cnt;
  const Eigen::VectorXd var = (sum2 / cnt - mean.cwiseAbs2()).cwiseMax(0.0) * cnt / (cnt - 1.0);
  double worst = 0.0;  // in standard errors
  for (std::size_t n = 0; n < model.n_sensors(); ++n) {
    const Eigen::VectorXd target = model.sensor_mean_at(n, theta);
    for (std::size_t k = 0; k < model.param_dim; ++k) {
      const auto idx = static_cast<Eigen::Index>(n * model.param_dim + k);
      const double se = std::sqrt(var[idx] / cnt);
      const double dev = std::abs(mean[idx] - target[static_cast<Eigen::Index>(k)]);
      worst = std::max(worst, se > 0.0 ? dev / se : (dev > 1e-12 ? std::numeric_limits<double>::infinity() : 0.0));
    }
  }
  return {worst <= se_multiple, worst, "max deviation of mean g_n from h_n in standard errors = " + std::to_string(worst)};
}

MomentEstimates estimate_moments(const SeparableModel& model, const Eigen::VectorXd& theta,
                                 ObservationStreams& streams, std::size_t draws, double epsilon1) {
  if (draws == 0) throw InvalidArgument("need at least one draw");
  const std::size_t M = model.param_dim;
  const std::size_t N = model.n_sensors();
  const Eigen::VectorXd h = model.h(theta);
  MomentEstimates est{0, 0, 0, 0};
  for (std::size_t d = 0; d < draws; ++d) {
    const Eigen::VectorXd J = observe_separable(model, theta, streams);
    Eigen::VectorXd avg = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(M));
    for (std::size_t n = 0; n < N; ++n) avg += J.segment(static_cast<Eigen::Index>(n * M), static_cast<Eigen::Index>(M));
    avg /= static_cast<double>(N);
    const double dev = (J - stack_copies(avg, N)).norm();
    est.eta += (avg - h).squaredNorm();
    est.kappa += std::pow(dev, 2.0 + epsilon1);
    est.kappa1 += dev;
    est.kappa2 += dev * dev;
  }
  const double cnt = static_cast<double>(draws);
  est.eta /= cnt;
  est.kappa /= cnt;
  est.kappa1 /= cnt;
  est.kappa2 /= cnt;
  return est;
}

Eigen::VectorXd numeric_inverse(const SeparableModel::Map& h, const Eigen::VectorXd& y, Eigen::VectorXd x,
                                double tol, std::size_t max_iter) {
  const auto dim = x.size();
  Eigen::VectorXd r = h(x) - y;
  for (std::size_t it = 0; it < max_iter && r.norm() > tol; ++it) {
    Eigen::MatrixXd Jac(dim, dim);
    for (Eigen::Index k = 0; k < dim; ++k) {
      const double step = 1e-7 * std::max(1.0, std::abs(x[k]));
      Eigen::VectorXd xp = x;
      xp[k] += step;
      Jac.col(k) = (h(xp) - h(x)) / step;
    }
    const Eigen::VectorXd delta = Jac.colPivHouseholderQr().solve(r);
    double t = 1.0;
    Eigen::VectorXd candidate = x - delta;
    Eigen::VectorXd rc = h(candidate) - y;
    while (rc.norm() >= r.norm() && t > 1e-10) {
      t *= 0.5;
      candidate = x - t * delta;
      rc = h(candidate) - y;
    }
    if (rc.norm() >= r.norm()) break;
    x = candidate;
    r = rc;
  }
  if (r.norm() > tol) throw Error("numeric inverse did not converge (residual " + std::to_string(r.norm()) + ")");
  return x;
}

}  // namespace ciest
