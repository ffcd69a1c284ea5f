#include "sonardiff/schedule.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "sonardiff/error.hpp"

namespace sonardiff {

NoiseSchedule::NoiseSchedule(std::vector<double> betas, std::string kind)
    : betas_(std::move(betas)), kind_(std::move(kind)) {
  if (betas_.empty()) throw InvalidArgument("NoiseSchedule: T must be >= 1");
  alphas_.reserve(betas_.size());
  alpha_bars_.reserve(betas_.size());
  // Running product in extended precision; only the final value is rounded.
  long double running = 1.0L;
  for (double b : betas_) {
    if (!(b >= 0.0 && b < 1.0)) throw InvalidArgument("NoiseSchedule: beta outside [0,1)");
    alphas_.push_back(1.0 - b);
    running *= 1.0L - static_cast<long double>(b);
    alpha_bars_.push_back(static_cast<double>(running));
  }
}

NoiseSchedule NoiseSchedule::linear(int steps, double beta_start, double beta_end) {
  if (steps < 1) throw InvalidArgument("linear_schedule: T must be >= 1");
  if (!(beta_start > 0.0 && beta_start <= beta_end && beta_end < 1.0)) {
    throw InvalidArgument("linear_schedule: need 0 < beta_start <= beta_end < 1");
  }
  std::vector<double> betas(static_cast<std::size_t>(steps));
  for (int i = 0; i < steps; ++i) {
    betas[static_cast<std::size_t>(i)] =
        steps == 1 ? beta_start
                   : beta_start + (beta_end - beta_start) * static_cast<double>(i) / (steps - 1);
  }
  betas.back() = beta_end;
  return NoiseSchedule(std::move(betas), "linear");
}

NoiseSchedule NoiseSchedule::from_betas(std::vector<double> betas) {
  return NoiseSchedule(std::move(betas), "custom");
}

int NoiseSchedule::checked(int t, int lo) const {
  if (t < lo || t > steps()) {
    throw InvalidArgument("NoiseSchedule: t=" + std::to_string(t) + " outside [" +
                          std::to_string(lo) + "," + std::to_string(steps()) + "]");
  }
  return t;
}

double NoiseSchedule::posterior_variance(int t) const {
  const double ab = alpha_bar(t);
  if (ab >= 1.0) return 0.0;
  return (1.0 - alpha_bar(t - 1)) / (1.0 - ab) * beta(t);
}

std::string NoiseSchedule::to_json() const {
  if (kind_ != "linear") throw InvalidArgument("only linear schedules are serializable");
  nlohmann::json j = {{"T", steps()}, {"beta_start", beta_start()}, {"beta_end", beta_end()},
                      {"kind", kind_}};
  return j.dump(2);
}

NoiseSchedule NoiseSchedule::from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw InvalidArgument(std::string("schedule JSON: ") + e.what());
  }
  if (j.value("kind", "") != "linear") throw InvalidArgument("schedule JSON: unsupported kind");
  auto s = linear(j.at("T").get<int>(), j.at("beta_start").get<double>(), j.at("beta_end").get<double>());
  for (int t = 2; t <= s.steps(); ++t) {
    if (!(s.alpha_bar(t) < s.alpha_bar(t - 1))) {
      throw InvalidArgument("schedule JSON: alpha_bar not strictly decreasing");
    }
  }
  return s;
}

std::vector<int> subsequence(const NoiseSchedule& schedule, int count) {
  const int T = schedule.steps();
  if (count < 1 || count > T) {
    throw InvalidArgument("subsequence: need 1 <= S <= T (S=" + std::to_string(count) +
                          ", T=" + std::to_string(T) + ")");
  }
  std::vector<int> idx(static_cast<std::size_t>(count));
  for (int i = 1; i <= count; ++i) {
    idx[static_cast<std::size_t>(i - 1)] =
        static_cast<int>(static_cast<long long>(i) * T / count);
  }
  return idx;
}

}  // namespace sonardiff
