#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <vector>

#include "ciest/graph.hpp"
#include "ciest/models.hpp"
#include "ciest/quantizer.hpp"
#include "ciest/runner.hpp"
#include "ciest/schedules.hpp"

namespace ciest {

/// Solves A S + S A^T + C = 0 for symmetric C by a dense linear solve over
/// the upper-triangular unknowns s_ij, i <= j.
Eigen::MatrixXd solve_lyapunov(const Eigen::MatrixXd& A, const Eigen::MatrixXd& C);

struct AsymptoticVarianceOptions {
  bool allow_unstable = false;
  std::uint64_t seed = 0;                   // for Monte-Carlo fallbacks
  std::size_t matrix_noise_draws = 100000;  // S_H when Htilde has a custom sampler
  std::size_t link_draws = 100000;          // S_q when the link model is custom
};

/// Limiting covariance of sqrt(i) (x(i) - 1 (x) theta) for LU with steps a/(i+1).
struct AsymptoticVarianceReport {
  Eigen::MatrixXd sigma;   // -a [b Lbar (x) I + D_H] + I/2
  Eigen::MatrixXd s0;      // s_h + s_zeta + b^2 s_q
  Eigen::MatrixXd s_h;     // observation-matrix noise
  Eigen::MatrixXd s_zeta;  // Dbar S_zeta Dbar^T
  Eigen::MatrixXd s_q;     // covariance of upsilon + psi at the limit
  Eigen::MatrixXd s;       // solves sigma S + S sigma^T = -a^2 s0
  std::vector<Eigen::MatrixXd> sensor_blocks;  // S_nn
  double stability_margin;    // largest eigenvalue of sigma; must be < 0
  double lyapunov_residual;   // max |sigma S + S sigma^T + a^2 s0|
  double trace_over_n;        // Tr(S) / N
  bool s_h_monte_carlo = false;
  double s_h_std_error = 0.0;  // max entrywise standard error when sampled
  bool s_q_monte_carlo = false;
};

/// Throws ValidationError when sigma is not stable, unless allow_unstable.
AsymptoticVarianceReport asymptotic_variance(double a, double b, const LinkFailureModel& network,
                                             const LinearModel& model, const Eigen::VectorXd& theta,
                                             const QuantizerSpec& quant,
                                             const AsymptoticVarianceOptions& options = {});

/// Covariance of upsilon + psi once every estimate sits at theta: diagonal,
/// with entry (n, m) = sum over base neighbours l of P(link nl active) *
/// step^2 p (1 - p), p = frac(theta_m / step). `activation` holds one
/// probability per base edge.
Eigen::MatrixXd quantization_covariance(const LaplacianMatrix& base, const std::vector<double>& activation,
                                        const Eigen::VectorXd& theta, double step);

/// Identical scalar sensors z_n = h theta + N(0, sigma^2).
struct ScalarExampleSummary {
  double s_lu;       // (a^2 sigma^2 h^2 / N) sum_n 1/(2ab lambda_n + 2ah^2 - 1)
  double s_lu_star;  // sigma^2 / (N h^2)
  double s_c;        // centralized estimator variance, sigma^2 / (N h^2)
};
ScalarExampleSummary scalar_example_summary(std::size_t n, double h, double sigma, double a, double b,
                                            const LaplacianMatrix& mean_laplacian);

enum class LyapunovKind { lu, nu };

/// LU: e^T [b Lbar (x) I + D_H] e; NU: ||e||^2, with e = x - 1 (x) theta.
/// `model` is required for the LU kind.
double evaluate_lyapunov(LyapunovKind kind, const Eigen::VectorXd& x, const Eigen::VectorXd& theta,
                         double weight, const LaplacianMatrix& mean_laplacian, const LinearModel* model);

/// The LU recursion with every noise replaced by its mean, checked against
/// ||e(i)|| <= exp(-lambda_min sum_{j=i0}^{i-1} alpha(j)) ||e(i0)|| where i0 is
/// the first index with alpha(i0) <= 1/lambda_max.
struct EnvelopeCheck {
  bool passed = true;
  bool lyapunov_decreasing = true;  // LU Lyapunov value non-increasing after i0
  std::uint64_t start_index = 0;
  double lambda_min = 0.0;
  double lambda_max = 0.0;
  std::vector<std::uint64_t> iters;
  std::vector<double> error;
  std::vector<double> envelope;  // NaN before start_index
  double worst_ratio = 0.0;      // max error / envelope after start_index
};
EnvelopeCheck expectation_envelope(const WeightSchedule& alpha, double b, const LaplacianMatrix& mean_laplacian,
                                   const LinearModel& model, const Eigen::VectorXd& theta,
                                   const Eigen::VectorXd& x0, std::uint64_t iterations, std::uint64_t stride = 1);

// Monte-Carlo statistics over traces.
struct DiagnosticsRequest {
  bool consistency = true;
  bool mse = true;
  bool consensus = true;
  bool normality = false;
  std::vector<Eigen::MatrixXd> reference_blocks;  // S_nn to compare against, optional
};

inline constexpr std::size_t kMinNormalityTraces = 30;

struct ConsistencyStats {
  std::size_t trials = 0;
  std::size_t diverged = 0;
  double median_initial_error = 0.0;
  double median_final_error = 0.0;
  double p90_final_error = 0.0;
  double median_ratio = 0.0;  // final / initial max-sensor error
  double p90_ratio = 0.0;
};

struct MseStats {
  std::vector<std::uint64_t> iters;
  std::vector<double> mse;  // mean over traces and sensors of ||x_n - theta||^2
  double slope = 0.0;                // log-log least squares over all i >= 1
  double slope_final_decade = 0.0;   // over i >= i_final / 10
};

struct ConsensusStats {
  std::vector<std::uint64_t> iters;
  std::vector<double> median_gap;
  double final_q10 = 0.0, final_q50 = 0.0, final_q90 = 0.0;
};

struct NormalityStats {
  std::uint64_t iteration = 0;
  bool degenerate = false;  // every sample has zero spread
  std::vector<Eigen::MatrixXd> empirical;            // per sensor, of sqrt(i)(x_n - theta)
  std::vector<double> relative_frobenius;            // vs reference_blocks, if given
  std::vector<std::vector<double>> skewness;         // per sensor, per coordinate
  std::vector<std::vector<double>> excess_kurtosis;  // per sensor, per coordinate
  double max_relative_frobenius = 0.0;
};

struct DiagnosticsReport {
  std::optional<ConsistencyStats> consistency;
  std::optional<MseStats> mse;
  std::optional<ConsensusStats> consensus;
  std::optional<NormalityStats> normality;
};

DiagnosticsReport mc_diagnostics(const std::vector<Trace>& traces, const Eigen::VectorXd& theta,
                                 const DiagnosticsRequest& request);

/// Linear-interpolated sample quantile, q in [0, 1].
double quantile(std::vector<double> values, double q);

}  // namespace ciest
