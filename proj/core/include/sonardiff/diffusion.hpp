#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <vector>

#include "sonardiff/plane.hpp"
#include "sonardiff/scene.hpp"
#include "sonardiff/schedule.hpp"

namespace sonardiff {

// Images live in [0,1]; the diffusion process runs on [-1,1].
Plane to_model_space(const Plane& pixels);
Plane from_model_space(const Plane& x);

// One Markov noising step: sqrt(1 - beta_t) x_{t-1} + sqrt(beta_t) eps.
Plane forward_step(const Plane& x_prev, int t, const Plane& eps, const NoiseSchedule& schedule);

// Closed form: sqrt(alpha_bar_t) x_0 + sqrt(1 - alpha_bar_t) eps.
Plane forward_closed(const Plane& x0, int t, const Plane& eps, const NoiseSchedule& schedule);

// Anything that predicts the injected noise from (x_t, t).
class EpsPredictor {
 public:
  virtual ~EpsPredictor() = default;
  virtual Plane predict(const Plane& x_t, int t) const = 0;
};

// Forwards to another predictor and counts the calls.
class CountingPredictor final : public EpsPredictor {
 public:
  explicit CountingPredictor(const EpsPredictor& inner) : inner_(inner) {}
  Plane predict(const Plane& x_t, int t) const override {
    calls_.fetch_add(1, std::memory_order_relaxed);
    return inner_.predict(x_t, t);
  }
  long calls() const noexcept { return calls_.load(); }

 private:
  const EpsPredictor& inner_;
  mutable std::atomic<long> calls_{0};
};

// x_prev = x_coef * x_t + eps_coef * eps_hat + noise_std * z
struct StepCoefficients {
  double x_coef = 0.0;
  double eps_coef = 0.0;
  double noise_std = 0.0;
};

// Ancestral step t -> t-1 with posterior variance beta-tilde.
StepCoefficients ddpm_coefficients(const NoiseSchedule& schedule, int t);

// Generalized step t -> t_prev (t_prev = 0 is the final step). When
// 1 - alpha_bar_prev - sigma^2 < 0 the direction term is clamped to zero and
// `clamped` (if given) is set.
StepCoefficients ddim_coefficients(const NoiseSchedule& schedule, int t, int t_prev, double eta,
                                   bool* clamped = nullptr);

enum class SamplerKind { DDPM, DDIM };

struct SamplerConfig {
  SamplerKind kind = SamplerKind::DDIM;
  int steps = 50;      // DDIM subsequence length; ignored for DDPM (always T)
  double eta = 0.0;
  std::uint64_t seed = 0;                  // drives x_T
  std::optional<std::uint64_t> noise_seed; // drives z; derived from seed when absent

  void validate(const NoiseSchedule& schedule) const;
};

// Every intermediate state (model space), for debugging dumps.
struct Trajectory {
  std::vector<int> timesteps;
  std::vector<Plane> states;
};

// Output is mapped back to [0,1] and clamped once, after the last step.
Plane sample_ddpm(const EpsPredictor& model, const NoiseSchedule& schedule, int height, int width,
                  std::uint64_t seed, Trajectory* trajectory = nullptr);
Plane sample_ddim(const EpsPredictor& model, const NoiseSchedule& schedule, int height, int width,
                  const SamplerConfig& config, Trajectory* trajectory = nullptr);
Plane sample(const EpsPredictor& model, const NoiseSchedule& schedule, int height, int width,
             const SamplerConfig& config, Trajectory* trajectory = nullptr);

// Mask labelling for generated images; an empty mask marks the image as
// carrying no mine.
using Annotator = std::function<Mask(const Plane&)>;

Dataset generate_set(const EpsPredictor& model, const NoiseSchedule& schedule, int height,
                     int width, const SamplerConfig& config, int count, MineClass mine_class,
                     const Annotator& annotate);

// Writes state_NNNN.f32 per recorded step plus index.json.
void write_trajectory(const std::filesystem::path& dir, const Trajectory& trajectory);

}  // namespace sonardiff
