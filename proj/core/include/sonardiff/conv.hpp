#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace sonardiff {

struct ConvLayerShape {
  int in_channels = 1;
  int out_channels = 1;
  int dilation = 1;
  bool residual = false;  // hidden layers only; output = silu(conv(x)) + x
};

// A chain of 3x3 'same' convolutions (zero padding) with SiLU between
// layers and no activation after the last. Hidden layers may add their
// input back (residual), which keeps deep dilated stacks trainable. Parameters live in one flat
// vector owned by the caller; this class only knows the layout.
//
// Each hidden layer also accepts a per-channel additive shift, which is how
// the denoiser injects its time embedding.
class ConvStack {
 public:
  ConvStack() = default;
  ConvStack(std::vector<ConvLayerShape> layers, int height, int width);

  std::size_t param_count() const noexcept { return param_count_; }
  std::size_t layer_count() const noexcept { return layers_.size(); }
  const ConvLayerShape& layer(std::size_t i) const { return layers_.at(i); }
  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }

  std::size_t weight_offset(std::size_t layer) const { return offsets_.at(layer); }
  std::size_t weight_count(std::size_t layer) const;
  std::size_t bias_offset(std::size_t layer) const { return offsets_.at(layer) + weight_count(layer); }

  struct Activations {
    std::vector<std::vector<double>> pre;   // per layer, before activation
    std::vector<std::vector<double>> post;  // per hidden layer, after SiLU (+ skip)
  };

  // `shifts[l]` (size out_channels of layer l) is added to hidden layer l's
  // pre-activation; pass an empty span for no shifts. Returns the last
  // layer's output (out_channels x H x W).
  std::span<const double> forward(std::span<const double> params, std::span<const double> input,
                                  std::span<const std::vector<double>> shifts,
                                  Activations& acts) const;

  // Accumulates d(loss)/d(params) into `grad` and, if `shift_grads` is
  // non-empty, d(loss)/d(shift) per hidden layer.
  void backward(std::span<const double> params, std::span<const double> input,
                const Activations& acts, std::span<const double> grad_output,
                std::span<double> grad, std::span<std::vector<double>> shift_grads) const;

 private:
  std::vector<ConvLayerShape> layers_;
  std::vector<std::size_t> offsets_;
  std::size_t param_count_ = 0;
  int height_ = 0;
  int width_ = 0;
};

// Low-level kernels, exposed for benchmarks and tests.
namespace conv {

void forward3x3(std::span<const double> in, int in_ch, int height, int width,
                std::span<const double> weights, std::span<const double> bias, int out_ch,
                int dilation, std::span<double> out);

void backward3x3(std::span<const double> in, int in_ch, int height, int width,
                 std::span<const double> weights, int out_ch, int dilation,
                 std::span<const double> grad_out, std::span<double> grad_in,
                 std::span<double> grad_weights, std::span<double> grad_bias);

inline double silu(double z) { return z / (1.0 + std::exp(-z)); }
inline double silu_grad(double z) {
  const double s = 1.0 / (1.0 + std::exp(-z));
  return s * (1.0 + z * (1.0 - s));
}

}  // namespace conv
}  // namespace sonardiff
