#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "ciest/error.hpp"

namespace ciest {

/// w(i) = scale / (i + 1)^exponent.
struct WeightSchedule {
  double scale = 1.0;
  double exponent = 1.0;

  WeightSchedule() = default;
  WeightSchedule(double scale, double exponent);

  double operator()(std::uint64_t i) const;
};

/// Outcome of a schedule check; `issues` explains every failed condition.
struct Verdict {
  bool passed = true;
  std::vector<ValidationIssue> issues;

  void fail(std::string code, std::string message);
};

enum class LuScheduleMode { persistence, normality };

/// Persistence: exponent in (0.5, 1], so sum w = inf and sum w^2 < inf.
/// Normality additionally needs exponent == 1 and scale > 1 / (2 lambda_min),
/// where lambda_min is the smallest eigenvalue of b (Lbar (x) I) + D_H.
Verdict validate_lu_schedule(const WeightSchedule& s, LuScheduleMode mode, double lambda_min = 0.0);

/// Innovation weight alpha (tau1) and consensus weight beta (tau2) for the
/// mixed time-scale recursion; epsilon1 is the moment surplus of the
/// transformed observations.
struct NluSchedulePair {
  WeightSchedule alpha;
  WeightSchedule beta;
  double epsilon1 = 0.0;
};

/// 0.5 < tau1, tau2 <= 1, tau1 > 1/(2 + epsilon1) + tau2 and 2 tau2 > tau1.
Verdict validate_nlu_schedules(const NluSchedulePair& pair);

/// sum_{k=j}^{i-1} [prod_{l=k+1}^{i-1} (1 - r1(l))] r2(k), evaluated by the
/// forward recursion y(k+1) = (1 - r1(k)) y(k) + r2(k), y(j) = 0. Throws if
/// r1(l) > 1 for some l in [j+1, i-1].
double weighted_tail_sum(const WeightSchedule& r1, const WeightSchedule& r2, std::uint64_t j,
                         std::uint64_t i);

/// Same recursion, returning the value at every i in `at` (ascending, >= j)
/// in one pass.
std::vector<double> weighted_tail_sum_series(const WeightSchedule& r1, const WeightSchedule& r2,
                                             std::uint64_t j, const std::vector<std::uint64_t>& at);

/// 2^d2 a2 (1 + 1/a1): bound on the tail sum when both exponents are equal.
double tail_sum_bound(const WeightSchedule& r1, const WeightSchedule& r2);

}  // namespace ciest
