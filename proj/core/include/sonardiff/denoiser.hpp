#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "sonardiff/conv.hpp"
#include "sonardiff/diffusion.hpp"
#include "sonardiff/plane.hpp"
#include "sonardiff/schedule.hpp"

namespace sonardiff {

struct DenoiserConfig {
  int height = 32;  // must be even: one 2x2 pooling level
  int width = 32;
  int channels = 16;         // full-resolution layers
  int coarse_channels = 32;  // half-resolution layers
  std::vector<int> coarse_dilations{1, 2, 4};
  int time_dim = 16;  // sinusoidal embedding size (even)

  friend bool operator==(const DenoiserConfig&, const DenoiserConfig&) = default;
};

// Two-level conv net. Full resolution: in (1 -> C), fine (C -> C, residual).
// Then 2x2 average pooling, coarse layers (C -> D, then D -> D residual,
// one per dilation), a C-channel projection upsampled by nearest neighbour
// and added back, one more residual C -> C layer, and a zero-initialized
// output conv (C -> 1). Every layer except the projection and the output
// gets a per-channel shift from the time embedding.
//
// Flat parameter vector: [convs in the order above | time projection
// weights | time projection bias].
struct DenoiserParams {
  DenoiserConfig config;
  std::vector<double> values;
  std::uint64_t seed = 0;
  long step_count = 0;

  friend bool operator==(const DenoiserParams&, const DenoiserParams&) = default;
};

struct TrainingPair {
  Plane x0;   // model space
  Plane eps;
  int t = 1;
};

struct LossAndGrad {
  double loss = 0.0;
  std::vector<double> grad;
};

std::vector<double> sinusoidal_embedding(int t, int dim);

class Denoiser {
 public:
  explicit Denoiser(DenoiserConfig config);

  const DenoiserConfig& config() const noexcept { return config_; }
  std::size_t param_count() const noexcept {
    return conv_params_ + shift_rows_ * (static_cast<std::size_t>(config_.time_dim) + 1);
  }

  // Seeded uniform fan-in init; output layer zeroed, so the initial
  // prediction is identically 0. Values are float32-representable.
  DenoiserParams init(std::uint64_t seed) const;

  Plane predict_eps(const DenoiserParams& params, const Plane& x_t, int t,
                    const NoiseSchedule& schedule) const;

  // Mean over batch and pixels of (eps - eps_hat)^2 with x_t built by the
  // closed-form forward process, plus its exact gradient.
  LossAndGrad loss_and_grad(const DenoiserParams& params, const std::vector<TrainingPair>& batch,
                            const NoiseSchedule& schedule) const;
  double loss(const DenoiserParams& params, const std::vector<TrainingPair>& batch,
              const NoiseSchedule& schedule) const;

 private:
  struct Layer {
    int in = 1, out = 1, dilation = 1, height = 0, width = 0;
    std::size_t offset = 0;  // weights, then out biases
    int shift = -1;          // row offset into the time projection; -1 for none
  };
  struct Activations;

  std::size_t weight_count(const Layer& l) const noexcept {
    return static_cast<std::size_t>(l.out) * static_cast<std::size_t>(l.in) * 9;
  }
  std::vector<double> time_shifts(std::span<const double> params, int t) const;
  void forward(std::span<const double> params, std::span<const double> input, int t,
               Activations& a) const;
  void check(const DenoiserParams& params) const;

  DenoiserConfig config_;
  std::vector<Layer> layers_;  // in, fine, coarse..., project, last, output
  std::size_t conv_params_ = 0;
  std::size_t shift_rows_ = 0;
};

// Binds parameters and schedule so samplers can call the network.
class DenoiserModel final : public EpsPredictor {
 public:
  DenoiserModel(const Denoiser& net, const DenoiserParams& params, const NoiseSchedule& schedule)
      : net_(net), params_(params), schedule_(schedule) {}
  Plane predict(const Plane& x_t, int t) const override {
    return net_.predict_eps(params_, x_t, t, schedule_);
  }

 private:
  const Denoiser& net_;
  const DenoiserParams& params_;
  const NoiseSchedule& schedule_;
};

struct TrainConfig {
  int epochs = 400;
  int batch_size = 16;
  double learning_rate = 0.002;
  double beta1 = 0.9;  // Adam moment decay rates
  double beta2 = 0.999;
  std::uint64_t seed = 0;
  long max_steps = 0;  // 0: no cap

  void validate() const;
};

struct TrainResult {
  DenoiserParams params;
  double initial_probe_loss = 0.0;
  double final_probe_loss = 0.0;
  long steps = 0;
  std::vector<double> epoch_loss;
};

// Adam on the eps-prediction objective. `images` are pixel-space
// [0,1]. Deterministic for a given (images, config); 0 epochs returns the
// initialization. Throws TrainingDiverged / NumericalError.
TrainResult train(const Denoiser& net, const std::vector<Plane>& images, const TrainConfig& config,
                  const NoiseSchedule& schedule);

// A fixed batch of (x0, eps, t) drawn from `images` for monitoring.
std::vector<TrainingPair> probe_batch(const std::vector<Plane>& images, std::size_t count,
                                      std::uint64_t seed, const NoiseSchedule& schedule);

void save_denoiser(const std::filesystem::path& path, const DenoiserParams& params);
DenoiserParams load_denoiser(const std::filesystem::path& path);

}  // namespace sonardiff
