#include "sonardiff/conv.hpp"

#include <algorithm>

#include <Eigen/Core>

#include "sonardiff/error.hpp"

namespace sonardiff {
namespace conv {

namespace {

using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

// Valid output range [lo, hi) along one axis for tap offset `off`.
inline void valid_range(int off, int n, int& lo, int& hi) {
  lo = std::max(0, -off);
  hi = std::min(n, n - off);
}

// Grow-only per-thread scratch; layer shapes alternate, and reallocating
// buffers this size on every call costs more than the arithmetic.
double* scratch(std::vector<double>& buf, std::size_t n) {
  if (buf.size() < n) buf.resize(n);
  return buf.data();
}

// Column matrix (in_ch * 9) x (H * W): row ci*9+k holds input channel ci
// shifted by tap k, zero outside the image.
void im2col(const double* in, int in_ch, int height, int width, int dilation, MapMat& cols) {
  const Eigen::Index plane = static_cast<Eigen::Index>(height) * width;
  cols.setZero();
  for (int ci = 0; ci < in_ch; ++ci) {
    const double* src = in + ci * plane;
    for (int k = 0; k < 9; ++k) {
      const int dy = (k / 3 - 1) * dilation, dx = (k % 3 - 1) * dilation;
      int y_lo, y_hi, x_lo, x_hi;
      valid_range(dy, height, y_lo, y_hi);
      valid_range(dx, width, x_lo, x_hi);
      double* row = cols.row(ci * 9 + k).data();
      for (int y = y_lo; y < y_hi; ++y) {
        const double* irow = src + static_cast<std::ptrdiff_t>(y + dy) * width + dx;
        double* orow = row + static_cast<std::ptrdiff_t>(y) * width;
        std::copy(irow + x_lo, irow + x_hi, orow + x_lo);
      }
    }
  }
}

// Adjoint of im2col: scatter-add the column gradient back onto the input.
void col2im(const MapMat& cols, int in_ch, int height, int width, int dilation, double* grad_in) {
  const Eigen::Index plane = static_cast<Eigen::Index>(height) * width;
  for (int ci = 0; ci < in_ch; ++ci) {
    double* dst = grad_in + ci * plane;
    for (int k = 0; k < 9; ++k) {
      const int dy = (k / 3 - 1) * dilation, dx = (k % 3 - 1) * dilation;
      int y_lo, y_hi, x_lo, x_hi;
      valid_range(dy, height, y_lo, y_hi);
      valid_range(dx, width, x_lo, x_hi);
      const double* row = cols.row(ci * 9 + k).data();
      for (int y = y_lo; y < y_hi; ++y) {
        double* drow = dst + static_cast<std::ptrdiff_t>(y + dy) * width + dx;
        const double* grow = row + static_cast<std::ptrdiff_t>(y) * width;
        for (int x = x_lo; x < x_hi; ++x) drow[x] += grow[x];
      }
    }
  }
}

}  // namespace

void forward3x3(std::span<const double> in, int in_ch, int height, int width,
                std::span<const double> weights, std::span<const double> bias, int out_ch,
                int dilation, std::span<double> out) {
  const Eigen::Index plane = static_cast<Eigen::Index>(height) * width;
  const Eigen::Index k = static_cast<Eigen::Index>(in_ch) * 9;
  thread_local std::vector<double> buf;
  MapMat cols(scratch(buf, static_cast<std::size_t>(k * plane)), k, plane);
  im2col(in.data(), in_ch, height, width, dilation, cols);
  ConstMapMat w(weights.data(), out_ch, k);
  MapMat o(out.data(), out_ch, plane);
  o.noalias() = w * cols;
  for (int co = 0; co < out_ch; ++co) o.row(co).array() += bias[static_cast<std::size_t>(co)];
}

void backward3x3(std::span<const double> in, int in_ch, int height, int width,
                 std::span<const double> weights, int out_ch, int dilation,
                 std::span<const double> grad_out, std::span<double> grad_in,
                 std::span<double> grad_weights, std::span<double> grad_bias) {
  const Eigen::Index plane = static_cast<Eigen::Index>(height) * width;
  const Eigen::Index k = static_cast<Eigen::Index>(in_ch) * 9;
  thread_local std::vector<double> buf, gbuf;
  MapMat cols(scratch(buf, static_cast<std::size_t>(k * plane)), k, plane);
  im2col(in.data(), in_ch, height, width, dilation, cols);
  ConstMapMat g(grad_out.data(), out_ch, plane);
  MapMat gw(grad_weights.data(), out_ch, k);
  gw.noalias() += g * cols.transpose();
  for (int co = 0; co < out_ch; ++co) grad_bias[static_cast<std::size_t>(co)] += g.row(co).sum();
  if (grad_in.empty()) return;
  ConstMapMat w(weights.data(), out_ch, k);
  MapMat gcols(scratch(gbuf, static_cast<std::size_t>(k * plane)), k, plane);
  gcols.noalias() = w.transpose() * g;
  col2im(gcols, in_ch, height, width, dilation, grad_in.data());
}

}  // namespace conv

ConvStack::ConvStack(std::vector<ConvLayerShape> layers, int height, int width)
    : layers_(std::move(layers)), height_(height), width_(width) {
  if (layers_.empty()) throw InvalidArgument("ConvStack: no layers");
  if (height < 1 || width < 1) throw InvalidArgument("ConvStack: empty spatial size");
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const auto& l = layers_[i];
    if (l.in_channels < 1 || l.out_channels < 1 || l.dilation < 1) {
      throw InvalidArgument("ConvStack: bad layer shape");
    }
    if (i > 0 && l.in_channels != layers_[i - 1].out_channels) {
      throw InvalidArgument("ConvStack: channel mismatch between layers");
    }
    if (l.residual && (l.in_channels != l.out_channels || i + 1 == layers_.size())) {
      throw InvalidArgument("ConvStack: residual layers must be hidden and keep the channel count");
    }
    offsets_.push_back(param_count_);
    param_count_ += weight_count(i) + static_cast<std::size_t>(l.out_channels);
  }
}

std::size_t ConvStack::weight_count(std::size_t layer) const {
  const auto& l = layers_.at(layer);
  return static_cast<std::size_t>(l.in_channels) * static_cast<std::size_t>(l.out_channels) * 9;
}

std::span<const double> ConvStack::forward(std::span<const double> params,
                                           std::span<const double> input,
                                           std::span<const std::vector<double>> shifts,
                                           Activations& acts) const {
  const std::size_t plane = static_cast<std::size_t>(height_) * static_cast<std::size_t>(width_);
  if (params.size() != param_count_) throw InvalidArgument("ConvStack: parameter count mismatch");
  if (input.size() != plane * static_cast<std::size_t>(layers_.front().in_channels)) {
    throw InvalidArgument("ConvStack: input shape mismatch");
  }
  acts.pre.resize(layers_.size());
  acts.post.resize(layers_.size() - 1);
  std::span<const double> cur = input;
  for (std::size_t l = 0; l < layers_.size(); ++l) {
    const auto& shape = layers_[l];
    auto& z = acts.pre[l];
    z.assign(plane * static_cast<std::size_t>(shape.out_channels), 0.0);
    conv::forward3x3(cur, shape.in_channels, height_, width_,
                     params.subspan(weight_offset(l), weight_count(l)),
                     params.subspan(bias_offset(l), static_cast<std::size_t>(shape.out_channels)),
                     shape.out_channels, shape.dilation, z);
    if (l + 1 == layers_.size()) break;
    if (l < shifts.size() && !shifts[l].empty()) {
      for (int c = 0; c < shape.out_channels; ++c) {
        const double s = shifts[l][static_cast<std::size_t>(c)];
        double* zc = z.data() + static_cast<std::size_t>(c) * plane;
        for (std::size_t i = 0; i < plane; ++i) zc[i] += s;
      }
    }
    auto& h = acts.post[l];
    h.resize(z.size());
    const auto n = static_cast<Eigen::Index>(z.size());
    const Eigen::Map<const Eigen::ArrayXd> za(z.data(), n);
    Eigen::Map<Eigen::ArrayXd> ha(h.data(), n);
    ha = za / (1.0 + (-za).exp());
    if (shape.residual) ha += Eigen::Map<const Eigen::ArrayXd>(cur.data(), n);
    cur = h;
  }
  return acts.pre.back();
}

void ConvStack::backward(std::span<const double> params, std::span<const double> input,
                         const Activations& acts, std::span<const double> grad_output,
                         std::span<double> grad,
                         std::span<std::vector<double>> shift_grads) const {
  const std::size_t plane = static_cast<std::size_t>(height_) * static_cast<std::size_t>(width_);
  // g: d/d(pre-activation) of the current layer; gpost: d/d(post) of it.
  thread_local std::vector<double> g, gpost, g_in;
  g.assign(grad_output.begin(), grad_output.end());
  for (std::size_t li = layers_.size(); li-- > 0;) {
    const auto& shape = layers_[li];
    const bool hidden = li + 1 < layers_.size();
    if (hidden) {
      const auto& z = acts.pre[li];
      const auto n = static_cast<Eigen::Index>(z.size());
      const Eigen::Map<const Eigen::ArrayXd> za(z.data(), n);
      const Eigen::ArrayXd s = 1.0 / (1.0 + (-za).exp());
      g.resize(z.size());
      Eigen::Map<Eigen::ArrayXd>(g.data(), n) =
          Eigen::Map<const Eigen::ArrayXd>(gpost.data(), n) * s * (1.0 + za * (1.0 - s));
      if (li < shift_grads.size() && !shift_grads[li].empty()) {
        auto& sg = shift_grads[li];
        for (int c = 0; c < shape.out_channels; ++c) {
          const double* gc = g.data() + static_cast<std::size_t>(c) * plane;
          double acc = 0.0;
          for (std::size_t i = 0; i < plane; ++i) acc += gc[i];
          sg[static_cast<std::size_t>(c)] += acc;
        }
      }
    }
    std::span<const double> layer_in = li == 0 ? input : std::span<const double>(acts.post[li - 1]);
    const bool need_input_grad = li > 0;
    g_in.assign(need_input_grad ? layer_in.size() : 0, 0.0);
    conv::backward3x3(layer_in, shape.in_channels, height_, width_,
                      params.subspan(weight_offset(li), weight_count(li)), shape.out_channels,
                      shape.dilation, g, g_in, grad.subspan(weight_offset(li), weight_count(li)),
                      grad.subspan(bias_offset(li), static_cast<std::size_t>(shape.out_channels)));
    if (!need_input_grad) break;
    if (shape.residual) {
      for (std::size_t i = 0; i < g_in.size(); ++i) g_in[i] += gpost[i];
    }
    gpost.swap(g_in);
  }
}

}  // namespace sonardiff
