#include "doctest.h"
#include "oracles/oracles.hpp"

#include <cmath>

#include "ciest/error.hpp"
#include "ciest/models.hpp"

using namespace ciest;

namespace {

LinearModel two_sensor_model() {
  Eigen::MatrixXd H0(1, 2), H1(2, 2);
  H0 << 1.0, 0.5;
  H1 << 0.0, 2.0, 1.0, -1.0;
  Eigen::MatrixXd cov(3, 3);
  cov << 1.0, 0.3, 0.0, 0.3, 2.0, 0.4, 0.0, 0.4, 0.5;
  return LinearModel(2, {H0, H1}, cov);
}

}  // namespace

TEST_CASE("shape validation") {
  Eigen::MatrixXd H(1, 2);
  H << 1, 0;
  CHECK_THROWS_AS(LinearModel(3, {H}, Eigen::MatrixXd::Identity(1, 1)), InvalidArgument);
  CHECK_THROWS_AS(LinearModel(2, {H}, Eigen::MatrixXd::Identity(2, 2)), InvalidArgument);
  Eigen::MatrixXd neg(1, 1);
  neg << -1.0;
  CHECK_THROWS_AS(LinearModel(2, {H}, neg), InvalidArgument);
  CHECK_THROWS_AS(LinearModel(2, {H}, Eigen::MatrixXd::Identity(1, 1))
                      .with_matrix_noise_std({Eigen::MatrixXd::Ones(2, 2)}),
                  InvalidArgument);
}

TEST_CASE("gram helpers match dense products") {
  auto model = two_sensor_model();
  Eigen::VectorXd x(2);
  x << 0.7, -1.3;
  for (std::size_t n = 0; n < 2; ++n) {
    const auto& H = model.mean_matrix(n);
    Eigen::VectorXd out(2);
    model.gram_apply(n, x.data(), out.data());
    CHECK((out - H.transpose() * H * x).norm() < 1e-14);
    Eigen::VectorXd z = Eigen::VectorXd::Random(H.rows());
    model.project_obs(n, z.data(), out.data());
    CHECK((out - H.transpose() * z).norm() < 1e-14);
  }
  CHECK(model.gram_block_diagonal().rows() == 4);
  CHECK(model.transpose_block_diagonal().cols() == 3);
}

TEST_CASE("observation mean and covariance") {
  for (auto f : {NoiseFactorization::cholesky, NoiseFactorization::eigen}) {
    auto base = two_sensor_model();
    LinearModel model(2, {base.mean_matrix(0), base.mean_matrix(1)}, base.noise_cov(), f);
    Eigen::VectorXd theta(2);
    theta << 1.0, 2.0;
    Eigen::VectorXd mean_ref(3);
    mean_ref << base.mean_matrix(0) * theta, base.mean_matrix(1) * theta;
    auto streams = make_observation_streams(4);
    const int draws = 200000;
    Eigen::VectorXd s1 = Eigen::VectorXd::Zero(3);
    Eigen::MatrixXd s2 = Eigen::MatrixXd::Zero(3, 3);
    for (int k = 0; k < draws; ++k) {
      Eigen::VectorXd z = observe_linear(model, theta, streams);
      s1 += z;
      s2 += (z - mean_ref) * (z - mean_ref).transpose();
    }
    CHECK(((s1 / draws) - mean_ref).cwiseAbs().maxCoeff() < 0.02);
    CHECK(((s2 / draws) - model.noise_cov()).cwiseAbs().maxCoeff() < 0.03);
  }
}

TEST_CASE("semidefinite noise covariance needs the eigen factorization") {
  Eigen::MatrixXd H = Eigen::MatrixXd::Identity(2, 2);
  Eigen::MatrixXd cov(2, 2);
  cov << 1.0, 1.0, 1.0, 1.0;
  LinearModel model(2, {H}, cov, NoiseFactorization::eigen);
  auto streams = make_observation_streams(1);
  Eigen::VectorXd z = observe_linear(model, Eigen::VectorXd::Zero(2), streams);
  CHECK(z(0) == doctest::Approx(z(1)));
}

TEST_CASE("matrix noise enters through theta") {
  Eigen::MatrixXd H(1, 1);
  H << 1.0;
  LinearModel model(1, {H}, Eigen::MatrixXd::Constant(1, 1, 1e-300));
  model.with_matrix_noise_std({Eigen::MatrixXd::Constant(1, 1, 0.5)});
  Eigen::VectorXd theta = Eigen::VectorXd::Constant(1, 2.0);
  auto streams = make_observation_streams(9);
  double s2 = 0.0;
  const int draws = 100000;
  for (int k = 0; k < draws; ++k) s2 += std::pow(observe_linear(model, theta, streams)(0) - 2.0, 2);
  CHECK(s2 / draws == doctest::Approx(0.25 * 4.0).epsilon(0.02));
}

TEST_CASE("observability and the LU gain matrix") {
  auto model = partial_observation_model(4, 2, 1.0);
  auto rep = check_observability(model);
  CHECK(rep.full_rank);
  CHECK(rep.gram.isApprox(2.0 * Eigen::MatrixXd::Identity(2, 2)));

  auto blind = partial_observation_model(1, 2, 1.0);
  CHECK_FALSE(check_observability(blind).full_rank);

  auto L = LaplacianMatrix::from_edges(4, topology_edges(Topology::ring, 4));
  const double b = 1.5;
  Eigen::MatrixXd K = lu_gain_matrix(b, L, model);
  Eigen::MatrixXd ref = b * oracle::kron_identity(L.matrix(), 2) + model.gram_block_diagonal();
  CHECK((K - ref).norm() < 1e-14);
  auto ev = oracle::jacobi_eigenvalues(ref);
  auto g = check_lu_gain_matrix(b, L, model);
  CHECK(g.positive_definite);
  CHECK(g.lambda_min == doctest::Approx(ev.front()));
  CHECK(g.lambda_max == doctest::Approx(ev.back()));
}

TEST_CASE("NU consensus threshold") {
  CHECK(nu_beta_threshold(2.0, 0.5, 4.0) == doctest::Approx((4.0 + 1.0) / 2.0));
  CHECK_THROWS_AS(nu_beta_threshold(1.0, 0.0, 1.0), InvalidArgument);
}

TEST_CASE("linear embedding") {
  auto model = two_sensor_model();
  auto s = embed_linear(model);
  RngStream rng = make_stream(8, "test");
  std::vector<Eigen::VectorXd> pts;
  for (int k = 0; k < 20; ++k) pts.push_back(Eigen::VectorXd::Random(2) * 3.0);
  CHECK(check_round_trip(s, pts).passed);
  CHECK(check_aggregate_consistency(s, pts).passed);
  CHECK(check_lipschitz(s, rng, 500, 5.0).passed);
  CHECK(check_monotonicity(s, rng, 500, 5.0).passed);
  Eigen::VectorXd theta(2);
  theta << 0.3, -0.8;
  auto streams = make_observation_streams(2);
  CHECK(check_transform_mean(s, theta, streams, 20000).passed);

  // identical streams give identical observations
  auto a = make_observation_streams(5), b = make_observation_streams(5);
  Eigen::VectorXd z = observe_linear(model, theta, a);
  Eigen::VectorXd J = observe_separable(s, theta, b);
  CHECK((J.segment(0, 2) - model.mean_matrix(0).transpose() * z.segment(0, 1)).norm() < 1e-14);
  CHECK((J.segment(2, 2) - model.mean_matrix(1).transpose() * z.segment(1, 2)).norm() < 1e-14);
}

TEST_CASE("cubic builtin") {
  auto s = cubic_model(5, 0.2);
  s.validate_shape();
  std::vector<Eigen::VectorXd> pts;
  for (double v : {-3.0, -0.5, 0.0, 0.1, 2.0, 7.0}) pts.push_back(Eigen::VectorXd::Constant(1, v));
  CHECK(check_round_trip(s, pts).passed);
  RngStream rng = make_stream(1, "test");
  CHECK(check_monotonicity(s, rng, 500, 5.0).passed);
  CHECK_FALSE(s.max_lipschitz().has_value());
  auto streams = make_observation_streams(3);
  CHECK(check_transform_mean(s, Eigen::VectorXd::Constant(1, 1.5), streams, 20000).passed);
}

TEST_CASE("false metadata is caught") {
  auto s = cubic_model(2, 0.1);
  s.lipschitz = std::vector<double>{1.0, 1.0};
  s.strong_monotonicity = 100.0;
  RngStream rng = make_stream(1, "test");
  CHECK_FALSE(check_lipschitz(s, rng, 200, 3.0).passed);
  CHECK_FALSE(check_monotonicity(s, rng, 200, 3.0).passed);
  SeparableModel broken = s;
  broken.inverse = [](const Eigen::VectorXd& y) -> Eigen::VectorXd { return y; };
  CHECK_FALSE(check_round_trip(broken, {Eigen::VectorXd::Constant(1, 2.0)}).passed);
  broken.inverse = nullptr;
  CHECK_THROWS_AS(broken.validate_shape(), InvalidArgument);
}

TEST_CASE("moment estimates") {
  auto s = embed_linear(scalar_network_model(4, 1.0, 1.0));
  auto streams = make_observation_streams(6);
  auto mom = estimate_moments(s, Eigen::VectorXd::Constant(1, 1.0), streams, 50000, 0.5);
  // avg g - h = mean of 4 unit normals, so eta = 1/4
  CHECK(mom.eta == doctest::Approx(0.25).epsilon(0.03));
  // ||J - 1 avg J||^2 ~ chi^2 with 3 degrees of freedom
  CHECK(mom.kappa2 == doctest::Approx(3.0).epsilon(0.03));
  CHECK(mom.kappa1 > 0.0);
}

TEST_CASE("numeric inverse") {
  SeparableModel::Map h = [](const Eigen::VectorXd& x) -> Eigen::VectorXd { return x.array().cube() + x.array(); };
  Eigen::VectorXd y = Eigen::VectorXd::Constant(2, 10.0);
  Eigen::VectorXd x = numeric_inverse(h, y, Eigen::VectorXd::Zero(2));
  CHECK((h(x) - y).norm() < 1e-10);
}
