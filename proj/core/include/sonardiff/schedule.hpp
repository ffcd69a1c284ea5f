#pragma once

#include <string>
#include <vector>

namespace sonardiff {

// Variance schedule with 1-based time: t = 1..T, and t = 0 is the clean
// image (alpha_bar(0) == 1). Immutable after construction.
class NoiseSchedule {
 public:
  // beta_t linear from beta_start (t = 1) to beta_end (t = T).
  static NoiseSchedule linear(int steps, double beta_start, double beta_end);

  // Arbitrary betas, t = 1..T. Used by tests for degenerate schedules;
  // 0 <= beta < 1 is accepted here (beta = 0 gives alpha_bar = 1).
  static NoiseSchedule from_betas(std::vector<double> betas);

  int steps() const noexcept { return static_cast<int>(betas_.size()); }
  double beta(int t) const { return betas_.at(checked(t, 1) - 1); }
  double alpha(int t) const { return alphas_.at(checked(t, 1) - 1); }
  double alpha_bar(int t) const { return t == 0 ? 1.0 : alpha_bars_.at(checked(t, 1) - 1); }

  // Posterior variance of q(x_{t-1} | x_t, x_0).
  double posterior_variance(int t) const;

  double beta_start() const noexcept { return betas_.front(); }
  double beta_end() const noexcept { return betas_.back(); }
  const std::string& kind() const noexcept { return kind_; }

  std::string to_json() const;
  // Rebuilds from (T, beta_start, beta_end, kind) and re-checks invariants.
  static NoiseSchedule from_json(const std::string& text);

 private:
  NoiseSchedule(std::vector<double> betas, std::string kind);
  int checked(int t, int lo) const;

  std::vector<double> betas_;
  std::vector<double> alphas_;
  std::vector<double> alpha_bars_;
  std::string kind_;
};

// Evenly spaced, strictly increasing timesteps of length `count` ending at T:
// t_i = floor(i * T / count), i = 1..count.
std::vector<int> subsequence(const NoiseSchedule& schedule, int count);

}  // namespace sonardiff
