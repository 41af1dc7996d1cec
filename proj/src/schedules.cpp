#include "ciest/schedules.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace ciest {

namespace {

std::string num(double v) {
  std::ostringstream os;
  os.precision(12);
  os << v;
  return os.str();
}

}  // namespace

WeightSchedule::WeightSchedule(double scale_, double exponent_) : scale(scale_), exponent(exponent_) {
  if (!(scale > 0.0) || !std::isfinite(scale)) throw InvalidArgument("schedule scale must be positive and finite");
  if (!(exponent >= 0.0 && exponent <= 1.0)) throw InvalidArgument("schedule exponent must lie in [0, 1]");
}

double WeightSchedule::operator()(std::uint64_t i) const {
  return scale / std::pow(static_cast<double>(i) + 1.0, exponent);
}

void Verdict::fail(std::string code, std::string message) {
  passed = false;
  issues.push_back({std::move(code), std::move(message)});
}

Verdict validate_lu_schedule(const WeightSchedule& s, LuScheduleMode mode, double lambda_min) {
  Verdict v;
  if (!(s.exponent > 0.5 && s.exponent <= 1.0))
    v.fail("persistence", "step exponent " + num(s.exponent) +
                              " is outside (0.5, 1]; the steps must be non-summable but square-summable");
  if (mode == LuScheduleMode::normality) {
    if (!(lambda_min > 0.0)) throw InvalidArgument("normality check needs lambda_min > 0");
    if (s.exponent != 1.0)
      v.fail("normality-exponent", "asymptotic normality needs step exponent 1, got " + num(s.exponent));
    const double need = 1.0 / (2.0 * lambda_min);
    if (!(s.scale > need))
      v.fail("normality-scale", "asymptotic normality needs a > 1/(2 lambda_min) = " + num(need) + ", got a = " +
                                    num(s.scale));
  }
  return v;
}

Verdict validate_nlu_schedules(const NluSchedulePair& pair) {
  Verdict v;
  const double t1 = pair.alpha.exponent;
  const double t2 = pair.beta.exponent;
  if (!(t1 > 0.5 && t1 <= 1.0)) v.fail("nlu-schedule", "alpha exponent " + num(t1) + " is outside (0.5, 1]");
  if (!(t2 > 0.5 && t2 <= 1.0)) v.fail("nlu-schedule", "beta exponent " + num(t2) + " is outside (0.5, 1]");
  if (!(pair.epsilon1 > 0.0)) v.fail("nlu-schedule", "epsilon1 must be positive, got " + num(pair.epsilon1));
  const double margin = 1.0 / (2.0 + pair.epsilon1);
  if (!(t1 > margin + t2))
    v.fail("nlu-schedule", "need alpha exponent > 1/(2+epsilon1) + beta exponent = " + num(margin + t2) +
                               ", got " + num(t1));
  if (!(2.0 * t2 > t1))
    v.fail("nlu-schedule", "need 2 * beta exponent > alpha exponent, got " + num(2.0 * t2) + " <= " + num(t1));
  return v;
}

std::vector<double> weighted_tail_sum_series(const WeightSchedule& r1, const WeightSchedule& r2,
                                             std::uint64_t j, const std::vector<std::uint64_t>& at) {
  if (!std::is_sorted(at.begin(), at.end())) throw InvalidArgument("evaluation points must be ascending");
  std::vector<double> out;
  out.reserve(at.size());
  double y = 0.0;
  std::uint64_t k = j;
  for (const auto target : at) {
    if (target < j) throw InvalidArgument("tail sum needs j <= i");
    for (; k < target; ++k) {
      // y(j) = 0, so the factor (1 - r1(j)) never multiplies anything.
      const double w = r1(k);
      if (k > j && w > 1.0)
        throw InvalidArgument("r1(" + std::to_string(k) + ") = " + num(w) + " exceeds 1; choose a larger j");
      y = (1.0 - w) * y + r2(k);
    }
    out.push_back(y);
  }
  return out;
}

double weighted_tail_sum(const WeightSchedule& r1, const WeightSchedule& r2, std::uint64_t j,
                         std::uint64_t i) {
  return weighted_tail_sum_series(r1, r2, j, {i}).front();
}

double tail_sum_bound(const WeightSchedule& r1, const WeightSchedule& r2) {
  return std::pow(2.0, r2.exponent) * r2.scale * (1.0 + 1.0 / r1.scale);
}

}  // namespace ciest
