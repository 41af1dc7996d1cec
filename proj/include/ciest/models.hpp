#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ciest/graph.hpp"
#include "ciest/rng.hpp"

namespace ciest {

/// Streams an observation draw may consume. The matrix stream is only used
/// by models with random observation matrices.
struct ObservationStreams {
  RngStream observation;
  RngStream matrix;
};

ObservationStreams make_observation_streams(std::uint64_t seed);

enum class NoiseFactorization { cholesky, eigen };

/// z_n(i) = (Hbar_n + Htilde_n(i)) theta + zeta_n(i), stacked over sensors.
///
/// zeta is zero-mean Gaussian with a full (possibly spatially correlated)
/// covariance over the stacked observation vector. Htilde is optional: either
/// independent Gaussian entries with given standard deviations (which admits
/// a closed-form covariance) or an arbitrary zero-mean sampler.
class LinearModel {
 public:
  using MatrixNoiseSampler = std::function<std::vector<Eigen::MatrixXd>(RngStream&)>;

  LinearModel(std::size_t param_dim, std::vector<Eigen::MatrixXd> mean_matrices,
              Eigen::MatrixXd noise_cov,
              NoiseFactorization factorization = NoiseFactorization::cholesky);

  /// Htilde entries independent N(0, entry_std[n](r, c)^2).
  LinearModel& with_matrix_noise_std(std::vector<Eigen::MatrixXd> entry_std);
  LinearModel& with_matrix_noise_sampler(MatrixNoiseSampler sampler);

  std::size_t param_dim() const { return m_; }
  std::size_t n_sensors() const { return H_.size(); }
  std::size_t sensor_dim(std::size_t n) const { return static_cast<std::size_t>(H_[n].rows()); }
  std::size_t obs_offset(std::size_t n) const { return offsets_[n]; }
  std::size_t total_obs_dim() const { return offsets_.back(); }

  const Eigen::MatrixXd& mean_matrix(std::size_t n) const { return H_[n]; }
  const Eigen::MatrixXd& noise_cov() const { return cov_; }
  bool has_matrix_noise() const { return bool(entry_std_) || bool(matrix_sampler_); }
  const std::optional<std::vector<Eigen::MatrixXd>>& matrix_noise_std() const { return entry_std_; }

  /// out = Hbar_n^T Hbar_n x_n (M values).
  void gram_apply(std::size_t n, const double* x, double* out) const;
  /// out = Hbar_n^T z_n (M values).
  void project_obs(std::size_t n, const double* z, double* out) const;

  /// One stacked draw z(i) of length total_obs_dim().
  void sample_into(const Eigen::VectorXd& theta, ObservationStreams& streams,
                   std::span<double> z) const;

  /// One draw of Htilde_n for every sensor (all zero shapes if none).
  std::vector<Eigen::MatrixXd> draw_matrix_noise(RngStream& rng) const;

  /// blockdiag(Hbar_n^T Hbar_n), NM x NM.
  Eigen::MatrixXd gram_block_diagonal() const;
  /// blockdiag(Hbar_n^T), NM x total_obs_dim.
  Eigen::MatrixXd transpose_block_diagonal() const;

 private:

  std::size_t m_;
  std::vector<Eigen::MatrixXd> H_;
  std::vector<Eigen::MatrixXd> HtH_;
  std::vector<Eigen::MatrixXd> Ht_;
  std::vector<std::size_t> offsets_;
  Eigen::MatrixXd cov_;
  Eigen::MatrixXd noise_factor_;
  bool diagonal_noise_;
  Eigen::VectorXd noise_std_;
  std::optional<std::vector<Eigen::MatrixXd>> entry_std_;
  MatrixNoiseSampler matrix_sampler_;
};

/// Separably estimable model: per-sensor transforms g_n whose means h_n(theta)
/// average to an invertible h(theta).
struct SeparableModel {
  using Sampler =
      std::function<void(const Eigen::VectorXd& theta, ObservationStreams&, std::span<double> z)>;
  /// g_n: writes M values from sensor n's raw observation.
  using Transform = std::function<void(std::size_t n, std::span<const double> z_n, std::span<double> out)>;
  /// h_n: writes M values.
  using MeanMap = std::function<void(std::size_t n, std::span<const double> theta, std::span<double> out)>;
  using Map = std::function<Eigen::VectorXd(const Eigen::VectorXd&)>;

  std::string name;
  std::size_t param_dim = 0;
  std::vector<std::size_t> sensor_dims;
  Sampler sample;
  Transform transform;
  MeanMap sensor_mean;
  Map aggregate;  // h; defaults to the average of sensor_mean when empty
  Map inverse;    // h^{-1}; must be supplied

  /// Optional sufficient-condition metadata.
  std::optional<std::vector<double>> lipschitz;  // k_n
  std::optional<double> strong_monotonicity;    // gamma
  bool sensor_monotone = false;                 // each h_n monotone (>= 0 form)

  std::size_t n_sensors() const { return sensor_dims.size(); }
  std::size_t total_obs_dim() const;
  std::size_t obs_offset(std::size_t n) const;

  /// h(theta), via `aggregate` if set, else the average of sensor means.
  Eigen::VectorXd h(const Eigen::VectorXd& theta) const;
  Eigen::VectorXd average_sensor_mean(const Eigen::VectorXd& theta) const;
  Eigen::VectorXd sensor_mean_at(std::size_t n, const Eigen::VectorXd& theta) const;
  /// K = max k_n, if declared.
  std::optional<double> max_lipschitz() const;

  void validate_shape() const;
};

struct ObservabilityReport {
  Eigen::MatrixXd gram;
  bool full_rank;
  double min_singular_value;
  double max_singular_value;
};

/// G = sum Hbar_n^T Hbar_n, full rank iff sigma_min > 1e-10 sigma_max.
ObservabilityReport check_observability(const LinearModel& model);

/// b (Lbar (x) I_M) + blockdiag(Hbar_n^T Hbar_n), dense NM x NM.
Eigen::MatrixXd lu_gain_matrix(double b, const LaplacianMatrix& mean_laplacian,
                               const LinearModel& model);

struct GainMatrixReport {
  bool positive_definite;
  double lambda_min;
  double lambda_max;
};

/// Extreme eigenvalues of the LU gain matrix. Throws if the matrix fails to be
/// positive definite while Lbar is connected and G is full rank, since that
/// combination cannot occur.
GainMatrixReport check_lu_gain_matrix(double b, const LaplacianMatrix& mean_laplacian,
                                      const LinearModel& model);

Eigen::VectorXd observe_linear(const LinearModel& model, const Eigen::VectorXd& theta,
                               ObservationStreams& streams);

/// Stacked g_n(z_n(i)) for one draw.
Eigen::VectorXd observe_separable(const SeparableModel& model, const Eigen::VectorXd& theta,
                                  ObservationStreams& streams);

/// (K^2 + K gamma) / (gamma lambda_2): NU consensus weights above this are
/// sufficient for consistency under Lipschitz h_n and strongly monotone h.
double nu_beta_threshold(double K, double gamma, double lambda2);

/// g_n(z) = Hbar_n^T z, h_n(theta) = Hbar_n^T Hbar_n theta, h = G theta / N.
/// Draws consume the streams exactly as the linear model does.
SeparableModel embed_linear(const LinearModel& model);

// Built-in models.
LinearModel scalar_network_model(std::size_t n_sensors, double gain, double noise_std);
/// Sensor n observes coordinate n mod M with unit gain.
LinearModel partial_observation_model(std::size_t n_sensors, std::size_t param_dim, double noise_std);
/// z_n = theta^3 + zeta_n, g_n = identity, h = theta^3, h^{-1} = cube root.
SeparableModel cubic_model(std::size_t n_sensors, double noise_std);

// Empirical checks of separable-model metadata.
struct SampledCheck {
  bool passed;
  double worst;  // worst observed ratio/residual
  std::string detail;
};

/// max ||h^{-1}(h(theta)) - theta|| over the points.
SampledCheck check_round_trip(const SeparableModel& model, const std::vector<Eigen::VectorXd>& points,
                              double tol = 1e-8);
/// h vs average of h_n.
SampledCheck check_aggregate_consistency(const SeparableModel& model,
                                         const std::vector<Eigen::VectorXd>& points, double tol = 1e-10);
/// ||h_n(a) - h_n(b)|| <= k_n ||a - b|| on random pairs in [-radius, radius]^M.
SampledCheck check_lipschitz(const SeparableModel& model, RngStream& rng, std::size_t pairs,
                             double radius);
/// (a-b)^T (h(a)-h(b)) >= gamma ||a-b||^2 (or >= 0 per h_n when only that is declared).
SampledCheck check_monotonicity(const SeparableModel& model, RngStream& rng, std::size_t pairs,
                                double radius);
/// Sample mean of g_n(z_n) within `se_multiple` standard errors of h_n(theta).
SampledCheck check_transform_mean(const SeparableModel& model, const Eigen::VectorXd& theta,
                                  ObservationStreams& streams, std::size_t draws,
                                  double se_multiple = 4.0);

/// Monte-Carlo estimates of the moment functionals at theta.
struct MomentEstimates {
  double eta;     // E||avg g - h||^2
  double kappa;   // E||J - 1 (x) avg J||^(2+eps1)
  double kappa1;  // E||J - 1 (x) avg J||
  double kappa2;  // E||J - 1 (x) avg J||^2
};
MomentEstimates estimate_moments(const SeparableModel& model, const Eigen::VectorXd& theta,
                                 ObservationStreams& streams, std::size_t draws, double epsilon1);

/// Damped Newton solve of h(x) = y with a finite-difference Jacobian. Never
/// used implicitly; models must supply h^{-1}.
Eigen::VectorXd numeric_inverse(const SeparableModel::Map& h, const Eigen::VectorXd& y,
                                Eigen::VectorXd start, double tol = 1e-12,
                                std::size_t max_iter = 200);

}  // namespace ciest
