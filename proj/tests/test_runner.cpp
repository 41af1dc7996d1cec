#include "doctest.h"

#include <cmath>
#include <cstring>

#include "ciest/error.hpp"
#include "ciest/runner.hpp"

using namespace ciest;

namespace {

Problem ring_problem(double step = 0.1) {
  auto base = LaplacianMatrix::from_edges(6, topology_edges(Topology::ring, 6));
  Problem p{LinkFailureModel::erasure(base, 0.2),
            partial_observation_model(6, 2, 0.5),
            QuantizerSpec{step > 0.0, step, true},
            WeightSchedule(0.5, 1.0),
            std::nullopt,
            2.0,
            (Eigen::VectorXd(2) << 0.4, -1.1).finished(),
            Eigen::VectorXd()};
  return p;
}

bool same_rows(const Trace& a, const Trace& b) {
  if (a.rows.size() != b.rows.size()) return false;
  for (std::size_t k = 0; k < a.rows.size(); ++k) {
    const auto& x = a.rows[k];
    const auto& y = b.rows[k];
    if (x.iter != y.iter || x.sensor_err != y.sensor_err || x.estimates != y.estimates) return false;
    if (std::memcmp(&x.consensus_gap, &y.consensus_gap, sizeof(double)) != 0) return false;
  }
  return true;
}

}  // namespace

TEST_CASE("trials are reproducible from the seed") {
  auto p = ring_problem();
  RunOptions o{Algorithm::lu, 500, 50, true, false};
  auto a = run_trial(p, o, 4), b = run_trial(p, o, 4), c = run_trial(p, o, 5);
  CHECK(same_rows(a, b));
  CHECK_FALSE(same_rows(a, c));
}

TEST_CASE("parallel trials equal sequential ones") {
  auto p = ring_problem();
  RunOptions o{Algorithm::lu, 300, 100, false, false};
  std::vector<std::uint64_t> seeds{9, 2, 7, 1, 3};
  auto traces = run_trials(p, o, seeds, "d", 3);
  REQUIRE(traces.size() == seeds.size());
  for (std::size_t k = 0; k < seeds.size(); ++k) {
    CHECK(traces[k].seed == seeds[k]);
    CHECK(traces[k].digest == "d");
    CHECK(same_rows(traces[k], run_trial(p, o, seeds[k])));
  }
}

TEST_CASE("recording stride keeps the final iterate") {
  auto p = ring_problem();
  RunOptions o{Algorithm::lu, 105, 25, false, false};
  auto t = run_trial(p, o, 1);
  std::vector<std::uint64_t> iters;
  for (const auto& r : t.rows) iters.push_back(r.iter);
  CHECK(iters == std::vector<std::uint64_t>{0, 25, 50, 75, 100, 105});
  CHECK(t.rows.front().alpha == doctest::Approx(0.5));
  CHECK(t.rows.front().consensus_weight == doctest::Approx(1.0));
  CHECK(std::isnan(t.rows.front().transformed_err));
  CHECK(t.rows.front().sensor_err[0] == doctest::Approx(p.theta.norm()));
}

TEST_CASE("LU error shrinks") {
  auto p = ring_problem();
  RunOptions o{Algorithm::lu, 20000, 20000, false, false};
  auto t = run_trial(p, o, 2);
  CHECK(t.max_error(t.rows.back()) < 0.2 * t.max_error(t.rows.front()));
}

TEST_CASE("NU on a linear model embeds it and matches LU") {
  auto p = ring_problem();
  RunOptions lu{Algorithm::lu, 200, 1, true, false};
  RunOptions nu = lu;
  nu.algorithm = Algorithm::nu;
  CHECK(same_rows(run_trial(p, lu, 6), run_trial(p, nu, 6)));
}

TEST_CASE("divergence is reported, not thrown") {
  auto p = ring_problem(0.0);
  p.alpha = WeightSchedule(50.0, 0.0);
  RunOptions o{Algorithm::lu, 1000, 1, false, false};
  auto t = run_trial(p, o, 1);
  REQUIRE(t.divergence.has_value());
  CHECK(t.divergence->iteration < 1000);
  CHECK_FALSE(t.rows.empty());
}

TEST_CASE("NLU runs on the cubic model") {
  auto base = LaplacianMatrix::from_edges(5, topology_edges(Topology::ring, 5));
  Problem p{LinkFailureModel::fixed(base), cubic_model(5, 0.2), QuantizerSpec{}, WeightSchedule(0.8, 1.0),
            WeightSchedule(0.45, 0.505), 0.0, Eigen::VectorXd::Constant(1, 2.0), Eigen::VectorXd()};
  RunOptions o{Algorithm::nlu, 5000, 1000, false, true};
  auto t = run_trial(p, o, 3);
  CHECK_FALSE(t.divergence.has_value());
  CHECK_FALSE(std::isnan(t.rows.back().transformed_err));
  CHECK(t.max_error(t.rows.back()) < 0.2);

  RunOptions lu{Algorithm::lu, 10, 1, false, false};
  CHECK_THROWS_AS(run_trial(p, lu, 1), InvalidArgument);
  p.beta.reset();
  CHECK_THROWS_AS(run_trial(p, o, 1), InvalidArgument);
}
