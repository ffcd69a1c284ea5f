#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "sonardiff/conv.hpp"
#include "sonardiff/plane.hpp"
#include "sonardiff/scene.hpp"

namespace sonardiff {

struct SegConfig {
  int height = 32;
  int width = 32;
  int channels = 8;
  int dilation = 2;
  int epochs = 50;
  int batch_size = 4;
  double learning_rate = 0.05;
  double momentum = 0.9;
  double focal_gamma = 2.0;
  double focal_alpha = 0.25;
  double output_bias_init = -2.0;
  std::uint64_t seed = 0;
  long max_steps = 0;  // 0: no cap

  void validate() const;
  friend bool operator==(const SegConfig&, const SegConfig&) = default;
};

// Three 3x3 conv layers (1 -> C -> C (dilated) -> 1) with SiLU in between and
// a sigmoid on the output: per-pixel mine probability.
struct SegModel {
  SegConfig config;
  std::vector<double> values;
  long step_count = 0;

  friend bool operator==(const SegModel&, const SegModel&) = default;
};

struct PixelLoss {
  double loss = 0.0;
  double dlogit = 0.0;
};

// BCE(p, y) + FL(p, y), FL = -alpha (1 - p_t)^gamma log p_t, evaluated from
// the logit for stability.
PixelLoss bce_focal(double logit, bool target, double gamma, double alpha);
double focal_term(double logit, bool target, double gamma, double alpha);
double bce_term(double logit, bool target);

struct SegSample {
  const Plane* image = nullptr;
  const Mask* mask = nullptr;
};

class Segmenter {
 public:
  explicit Segmenter(const SegConfig& config);

  std::size_t param_count() const noexcept { return stack_.param_count(); }
  SegModel init(std::uint64_t seed) const;

  Plane probabilities(const SegModel& model, const Plane& image) const;

  // Mean BCE+Focal over batch and pixels and its gradient.
  double loss_and_grad(const SegModel& model, const std::vector<SegSample>& batch,
                       std::vector<double>* grad) const;

 private:
  SegConfig config_;
  ConvStack stack_;
};

struct SegTrainResult {
  SegModel model;
  double initial_probe_loss = 0.0;
  double final_probe_loss = 0.0;
  long steps = 0;
};

// Deterministic given config.seed. Throws TrainingDiverged when the batch
// loss exceeds 10x the initial probe loss.
SegTrainResult train_seg(const Dataset& train, const SegConfig& config);

double pixel_accuracy(const Segmenter& net, const SegModel& model, const LabeledImage& img,
                      double p_thresh = 0.5);

void save_segmenter(const std::filesystem::path& path, const SegModel& model);
SegModel load_segmenter(const std::filesystem::path& path);

}  // namespace sonardiff
