#include "sonardiff/denoiser.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <Eigen/Core>
#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "sonardiff/dataset_io.hpp"
#include "sonardiff/random.hpp"

namespace sonardiff {
namespace {

constexpr std::uint64_t kStreamInit = 30;
constexpr std::uint64_t kStreamBatches = 31;
constexpr std::uint64_t kStreamProbe = 32;
constexpr double kDivergenceFactor = 10.0;
constexpr double kAdamEpsilon = 1e-8;

// Elementwise SiLU of `z`, written to `out` (added to it when `accumulate`).
void silu_into(const std::vector<double>& z, std::vector<double>& out, bool accumulate) {
  out.resize(z.size());
  const Eigen::Map<const Eigen::ArrayXd> zz(z.data(), static_cast<Eigen::Index>(z.size()));
  Eigen::Map<Eigen::ArrayXd> o(out.data(), static_cast<Eigen::Index>(out.size()));
  if (accumulate) {
    o += zz / (1.0 + (-zz).exp());
  } else {
    o = zz / (1.0 + (-zz).exp());
  }
}

// g *= silu'(z)
void silu_backward(const std::vector<double>& z, std::vector<double>& g) {
  const Eigen::Map<const Eigen::ArrayXd> zz(z.data(), static_cast<Eigen::Index>(z.size()));
  Eigen::Map<Eigen::ArrayXd> gg(g.data(), static_cast<Eigen::Index>(g.size()));
  const Eigen::ArrayXd sig = 1.0 / (1.0 + (-zz).exp());
  gg *= sig * (1.0 + zz * (1.0 - sig));
}

void avg_pool2(const std::vector<double>& in, int ch, int h, int w, std::vector<double>& out) {
  const int hh = h / 2, hw = w / 2;
  out.assign(static_cast<std::size_t>(ch) * hh * hw, 0.0);
  for (int c = 0; c < ch; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        out[(static_cast<std::size_t>(c) * hh + y / 2) * hw + x / 2] +=
            0.25 * in[(static_cast<std::size_t>(c) * h + y) * w + x];
      }
}

// Adds the nearest-neighbour upsampling of `in` (ch x h/2 x w/2) to `out`.
void add_upsampled(const std::vector<double>& in, int ch, int h, int w, std::vector<double>& out) {
  const int hh = h / 2, hw = w / 2;
  for (int c = 0; c < ch; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        out[(static_cast<std::size_t>(c) * h + y) * w + x] +=
            in[(static_cast<std::size_t>(c) * hh + y / 2) * hw + x / 2];
      }
}

double to_f32(double v) { return static_cast<double>(static_cast<float>(v)); }

}  // namespace

std::vector<double> sinusoidal_embedding(int t, int dim) {
  std::vector<double> e(static_cast<std::size_t>(dim));
  const int half = dim / 2;
  for (int k = 0; k < half; ++k) {
    const double freq = std::pow(10000.0, -static_cast<double>(k) / half);
    e[static_cast<std::size_t>(k)] = std::sin(t * freq);
    e[static_cast<std::size_t>(k + half)] = std::cos(t * freq);
  }
  return e;
}

struct Denoiser::Activations {
  std::vector<double> shifts;            // one per shift row
  std::vector<std::vector<double>> pre;  // per layer, conv output plus shift
  std::vector<std::vector<double>> post; // per layer except the output
  std::vector<double> pooled;            // pooled fine features
  std::vector<double> merged;            // fine features plus upsampled projection
};

Denoiser::Denoiser(DenoiserConfig config) : config_(std::move(config)) {
  const auto& c = config_;
  if (c.time_dim < 2 || c.time_dim % 2 != 0) {
    throw InvalidArgument("DenoiserConfig: time_dim must be a positive even number");
  }
  if (c.height < 2 || c.width < 2 || c.height % 2 != 0 || c.width % 2 != 0) {
    throw InvalidArgument("DenoiserConfig: height and width must be even and at least 2");
  }
  if (c.channels < 1 || c.coarse_channels < 1) throw InvalidArgument("DenoiserConfig: channel counts must be >= 1");
  if (c.coarse_dilations.empty()) throw InvalidArgument("DenoiserConfig: need at least one coarse layer");
  const int H = c.height, W = c.width, C = c.channels, D = c.coarse_channels;
  int shift = 0;
  auto add = [&](int in, int out, int dilation, int h, int w, bool shifted) {
    if (dilation < 1) throw InvalidArgument("DenoiserConfig: dilation must be >= 1");
    Layer l{in, out, dilation, h, w, conv_params_, shifted ? shift : -1};
    if (shifted) shift += out;
    conv_params_ += weight_count(l) + static_cast<std::size_t>(out);
    layers_.push_back(l);
  };
  add(1, C, 1, H, W, true);
  add(C, C, 1, H, W, true);
  for (std::size_t k = 0; k < c.coarse_dilations.size(); ++k) {
    add(k == 0 ? C : D, D, c.coarse_dilations[k], H / 2, W / 2, true);
  }
  add(D, C, 1, H / 2, W / 2, false);
  add(C, C, 1, H, W, true);
  add(C, 1, 1, H, W, false);
  shift_rows_ = static_cast<std::size_t>(shift);
}

DenoiserParams Denoiser::init(std::uint64_t seed) const {
  DenoiserParams p;
  p.config = config_;
  p.seed = seed;
  p.values.assign(param_count(), 0.0);
  Rng rng(derive_seed(seed, kStreamInit));
  // Conv weights U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases 0, output conv 0.
  for (std::size_t i = 0; i + 1 < layers_.size(); ++i) {
    const auto& l = layers_[i];
    const double bound = 1.0 / std::sqrt(9.0 * l.in);
    for (std::size_t k = 0; k < weight_count(l); ++k) p.values[l.offset + k] = to_f32(rng.uniform(-bound, bound));
  }
  const double bound = 1.0 / std::sqrt(static_cast<double>(config_.time_dim));
  const auto tw = shift_rows_ * static_cast<std::size_t>(config_.time_dim);
  for (std::size_t i = 0; i < tw; ++i) p.values[conv_params_ + i] = to_f32(rng.uniform(-bound, bound));
  return p;
}

void Denoiser::check(const DenoiserParams& params) const {
  if (params.values.size() != param_count()) {
    throw InvalidArgument("Denoiser: parameter vector does not match the architecture");
  }
}

std::vector<double> Denoiser::time_shifts(std::span<const double> params, int t) const {
  const auto emb = sinusoidal_embedding(t, config_.time_dim);
  const auto E = static_cast<std::size_t>(config_.time_dim);
  const double* w = params.data() + conv_params_;
  const double* b = w + shift_rows_ * E;
  std::vector<double> shifts(shift_rows_);
  for (std::size_t r = 0; r < shift_rows_; ++r) {
    double s = b[r];
    for (std::size_t j = 0; j < E; ++j) s += w[r * E + j] * emb[j];
    shifts[r] = s;
  }
  return shifts;
}

void Denoiser::forward(std::span<const double> params, std::span<const double> input, int t,
                       Activations& a) const {
  a.shifts = time_shifts(params, t);
  a.pre.resize(layers_.size());
  a.post.resize(layers_.size() - 1);
  auto conv = [&](std::size_t i, std::span<const double> in) {
    const auto& l = layers_[i];
    const std::size_t plane = static_cast<std::size_t>(l.height) * static_cast<std::size_t>(l.width);
    auto& z = a.pre[i];
    z.resize(static_cast<std::size_t>(l.out) * plane);
    conv::forward3x3(in, l.in, l.height, l.width, params.subspan(l.offset, weight_count(l)),
                     params.subspan(l.offset + weight_count(l), static_cast<std::size_t>(l.out)), l.out,
                     l.dilation, z);
    if (l.shift < 0) return;
    for (int c = 0; c < l.out; ++c) {
      const double s = a.shifts[static_cast<std::size_t>(l.shift + c)];
      for (std::size_t k = 0; k < plane; ++k) z[static_cast<std::size_t>(c) * plane + k] += s;
    }
  };
  const int H = config_.height, W = config_.width, C = config_.channels;
  const std::size_t K = config_.coarse_dilations.size();
  const std::size_t proj = 2 + K, last = 3 + K, out = 4 + K;

  conv(0, input);
  silu_into(a.pre[0], a.post[0], false);
  conv(1, a.post[0]);
  a.post[1] = a.post[0];
  silu_into(a.pre[1], a.post[1], true);
  avg_pool2(a.post[1], C, H, W, a.pooled);
  for (std::size_t k = 0; k < K; ++k) {
    const auto& prev = k == 0 ? a.pooled : a.post[1 + k];
    conv(2 + k, prev);
    if (k == 0) {
      silu_into(a.pre[2 + k], a.post[2 + k], false);
    } else {
      a.post[2 + k] = prev;
      silu_into(a.pre[2 + k], a.post[2 + k], true);
    }
  }
  conv(proj, a.post[proj - 1]);
  silu_into(a.pre[proj], a.post[proj], false);
  a.merged = a.post[1];
  add_upsampled(a.post[proj], C, H, W, a.merged);
  conv(last, a.merged);
  a.post[last] = a.merged;
  silu_into(a.pre[last], a.post[last], true);
  conv(out, a.post[last]);
}

Plane Denoiser::predict_eps(const DenoiserParams& params, const Plane& x_t, int t,
                            const NoiseSchedule& schedule) const {
  check(params);
  if (x_t.height() != config_.height || x_t.width() != config_.width) {
    throw InvalidArgument("predict_eps: image shape does not match the denoiser");
  }
  if (t < 1 || t > schedule.steps()) throw InvalidArgument("predict_eps: t out of range");
  thread_local Activations acts;
  forward(params.values, x_t.values(), t, acts);
  Plane eps(config_.height, config_.width);
  std::copy(acts.pre.back().begin(), acts.pre.back().end(), eps.values().begin());
  return eps;
}

LossAndGrad Denoiser::loss_and_grad(const DenoiserParams& params,
                                    const std::vector<TrainingPair>& batch,
                                    const NoiseSchedule& schedule) const {
  check(params);
  if (batch.empty()) throw InvalidArgument("loss_and_grad: empty batch");
  const std::span<const double> all(params.values);
  const int H = config_.height, W = config_.width, C = config_.channels;
  const std::size_t E = static_cast<std::size_t>(config_.time_dim);
  const std::size_t K = config_.coarse_dilations.size();
  const std::size_t proj = 2 + K, last = 3 + K, out = 4 + K;
  const std::size_t plane = static_cast<std::size_t>(H) * static_cast<std::size_t>(W);
  const double norm = 1.0 / (static_cast<double>(batch.size()) * static_cast<double>(plane));

  LossAndGrad r;
  r.grad.assign(param_count(), 0.0);
  std::vector<double> gshift(shift_rows_);
  double sum = 0.0;
  thread_local Activations a;
  thread_local std::vector<double> g_out, g_fine, g_merged, g_small, g_prev, g_z;

  // Conv backward for layer i given d/d(pre) in g_z; input gradient is
  // accumulated into `g_in` unless it is null.
  auto back = [&](std::size_t i, std::span<const double> in, std::vector<double>* g_in) {
    const auto& l = layers_[i];
    const std::size_t lp = static_cast<std::size_t>(l.height) * static_cast<std::size_t>(l.width);
    if (l.shift >= 0) {
      for (int c = 0; c < l.out; ++c) {
        double s = 0.0;
        for (std::size_t k = 0; k < lp; ++k) s += g_z[static_cast<std::size_t>(c) * lp + k];
        gshift[static_cast<std::size_t>(l.shift + c)] += s;
      }
    }
    conv::backward3x3(in, l.in, l.height, l.width, all.subspan(l.offset, weight_count(l)), l.out, l.dilation,
                      g_z, g_in ? std::span<double>(*g_in) : std::span<double>(),
                      std::span<double>(r.grad).subspan(l.offset, weight_count(l)),
                      std::span<double>(r.grad).subspan(l.offset + weight_count(l), static_cast<std::size_t>(l.out)));
  };

  for (const auto& pair : batch) {
    if (pair.t < 1 || pair.t > schedule.steps()) throw InvalidArgument("loss_and_grad: t out of range");
    const Plane x_t = forward_closed(pair.x0, pair.t, pair.eps, schedule);
    if (x_t.height() != H || x_t.width() != W) {
      throw InvalidArgument("loss_and_grad: image shape does not match the denoiser");
    }
    forward(all, x_t.values(), pair.t, a);
    const auto& y = a.pre[out];
    g_out.resize(plane);
    for (std::size_t i = 0; i < plane; ++i) {
      const double d = y[i] - pair.eps[i];
      sum += d * d;
      g_out[i] = 2.0 * d * norm;
    }
    std::fill(gshift.begin(), gshift.end(), 0.0);

    // output conv and the last residual layer
    g_fine.assign(static_cast<std::size_t>(C) * plane, 0.0);
    g_z = g_out;
    back(out, a.post[last], &g_fine);
    g_merged = g_fine;
    g_z = g_fine;
    silu_backward(a.pre[last], g_z);
    back(last, a.merged, &g_merged);

    // merged = fine + upsample(silu(pre[proj]))
    const int hh = H / 2, hw = W / 2;
    g_z.assign(static_cast<std::size_t>(C) * hh * hw, 0.0);
    for (int c = 0; c < C; ++c)
      for (int yy = 0; yy < H; ++yy)
        for (int xx = 0; xx < W; ++xx) {
          g_z[(static_cast<std::size_t>(c) * hh + yy / 2) * hw + xx / 2] +=
              g_merged[(static_cast<std::size_t>(c) * H + yy) * W + xx];
        }
    silu_backward(a.pre[proj], g_z);
    g_small.assign(a.post[proj - 1].size(), 0.0);
    back(proj, a.post[proj - 1], &g_small);

    // coarse layers, last to first; g_small holds d/d(output of layer 2+k)
    for (std::size_t k = K; k-- > 0;) {
      const auto& in = k == 0 ? a.pooled : a.post[1 + k];
      g_prev = k == 0 ? std::vector<double>(in.size(), 0.0) : g_small;
      g_z = g_small;
      silu_backward(a.pre[2 + k], g_z);
      back(2 + k, in, &g_prev);
      std::swap(g_small, g_prev);
    }

    // pooling adjoint, then the fine residual layer and the input layer
    g_fine = g_merged;
    for (int c = 0; c < C; ++c)
      for (int yy = 0; yy < H; ++yy)
        for (int xx = 0; xx < W; ++xx) {
          g_fine[(static_cast<std::size_t>(c) * H + yy) * W + xx] +=
              0.25 * g_small[(static_cast<std::size_t>(c) * hh + yy / 2) * hw + xx / 2];
        }
    g_prev = g_fine;
    g_z = g_fine;
    silu_backward(a.pre[1], g_z);
    back(1, a.post[0], &g_prev);
    g_z = g_prev;
    silu_backward(a.pre[0], g_z);
    back(0, x_t.values(), nullptr);

    const auto emb = sinusoidal_embedding(pair.t, config_.time_dim);
    double* gw = r.grad.data() + conv_params_;
    double* gb = gw + shift_rows_ * E;
    for (std::size_t k = 0; k < shift_rows_; ++k) {
      gb[k] += gshift[k];
      for (std::size_t j = 0; j < E; ++j) gw[k * E + j] += gshift[k] * emb[j];
    }
  }
  r.loss = sum * norm;
  return r;
}

double Denoiser::loss(const DenoiserParams& params, const std::vector<TrainingPair>& batch,
                      const NoiseSchedule& schedule) const {
  double sum = 0.0;
  std::size_t n = 0;
  for (const auto& pair : batch) {
    const Plane x_t = forward_closed(pair.x0, pair.t, pair.eps, schedule);
    const Plane eps_hat = predict_eps(params, x_t, pair.t, schedule);
    for (std::size_t i = 0; i < eps_hat.size(); ++i) {
      const double d = eps_hat[i] - pair.eps[i];
      sum += d * d;
    }
    n += eps_hat.size();
  }
  if (n == 0) throw InvalidArgument("loss: empty batch");
  return sum / static_cast<double>(n);
}

void TrainConfig::validate() const {
  if (epochs < 0) throw InvalidArgument("TrainConfig: epochs must be >= 0");
  if (batch_size < 1) throw InvalidArgument("TrainConfig: batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw InvalidArgument("TrainConfig: learning rate must be > 0");
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) {
    throw InvalidArgument("TrainConfig: Adam decay rates outside [0,1)");
  }
}

std::vector<TrainingPair> probe_batch(const std::vector<Plane>& images, std::size_t count,
                                      std::uint64_t seed, const NoiseSchedule& schedule) {
  if (images.empty()) throw InvalidArgument("probe_batch: no images");
  Rng rng(derive_seed(seed, kStreamProbe));
  std::vector<TrainingPair> batch;
  for (std::size_t i = 0; i < count; ++i) {
    const auto& img = images[i % images.size()];
    TrainingPair p;
    p.x0 = to_model_space(img);
    p.t = rng.uniform_int(1, schedule.steps());
    p.eps = rng.normal_plane(img.height(), img.width());
    batch.push_back(std::move(p));
  }
  return batch;
}

TrainResult train(const Denoiser& net, const std::vector<Plane>& images, const TrainConfig& config,
                  const NoiseSchedule& schedule) {
  config.validate();
  if (images.empty()) throw InvalidArgument("train: empty dataset");
  TrainResult result;
  result.params = net.init(config.seed);
  const auto probe = probe_batch(images, 16, config.seed, schedule);
  result.initial_probe_loss = net.loss(result.params, probe, schedule);
  result.final_probe_loss = result.initial_probe_loss;
  if (config.epochs == 0) return result;

  std::vector<Plane> x0;
  x0.reserve(images.size());
  for (const auto& img : images) x0.push_back(to_model_space(img));

  Rng rng(derive_seed(config.seed, kStreamBatches));
  std::vector<std::size_t> order(images.size());
  std::vector<double> m1(net.param_count(), 0.0), m2(net.param_count(), 0.0);
  auto& p = result.params.values;
  const double bound = kDivergenceFactor * std::max(result.initial_probe_loss, 1e-12);

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng.engine());
    double epoch_sum = 0.0;
    int batches = 0;
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      std::vector<TrainingPair> batch;
      batch.reserve(end - start);
      for (std::size_t i = start; i < end; ++i) {
        TrainingPair pair;
        pair.x0 = x0[order[i]];
        pair.t = rng.uniform_int(1, schedule.steps());
        pair.eps = rng.normal_plane(pair.x0.height(), pair.x0.width());
        batch.push_back(std::move(pair));
      }
      auto lg = net.loss_and_grad(result.params, batch, schedule);
      if (!std::isfinite(lg.loss)) {
        throw NumericalError("train: non-finite loss at step " + std::to_string(result.steps), result.steps);
      }
      if (lg.loss > bound) {
        throw TrainingDiverged("train: loss " + std::to_string(lg.loss) + " exceeds 10x the initial probe loss at step " +
                               std::to_string(result.steps));
      }
      ++result.steps;
      const double c1 = 1.0 - std::pow(config.beta1, static_cast<double>(result.steps));
      const double c2 = 1.0 - std::pow(config.beta2, static_cast<double>(result.steps));
      for (std::size_t i = 0; i < p.size(); ++i) {
        const double g = lg.grad[i];
        m1[i] = config.beta1 * m1[i] + (1.0 - config.beta1) * g;
        m2[i] = config.beta2 * m2[i] + (1.0 - config.beta2) * g * g;
        p[i] -= config.learning_rate * (m1[i] / c1) / (std::sqrt(m2[i] / c2) + kAdamEpsilon);
      }
      epoch_sum += lg.loss;
      ++batches;
      if (config.max_steps > 0 && result.steps >= config.max_steps) break;
    }
    result.epoch_loss.push_back(epoch_sum / std::max(batches, 1));
    if (config.max_steps > 0 && result.steps >= config.max_steps) break;
  }
  for (auto& v : p) {
    v = to_f32(v);
    if (!std::isfinite(v)) throw NumericalError("train: non-finite parameter", result.steps);
  }
  result.params.step_count = result.steps;
  result.final_probe_loss = net.loss(result.params, probe, schedule);
  spdlog::debug("denoiser: {} steps, probe loss {:.4f} -> {:.4f}", result.steps,
                result.initial_probe_loss, result.final_probe_loss);
  return result;
}

void save_denoiser(const std::filesystem::path& path, const DenoiserParams& params) {
  const auto& c = params.config;
  nlohmann::json header = {
      {"format", "sonardiff-params"},
      {"kind", "denoiser"},
      {"config", {{"height", c.height}, {"width", c.width}, {"channels", c.channels},
                  {"coarse_channels", c.coarse_channels}, {"coarse_dilations", c.coarse_dilations},
                  {"time_dim", c.time_dim}}},
      {"seed", params.seed},
      {"step_count", params.step_count},
      {"param_count", params.values.size()}};
  write_param_file(path, header.dump(), params.values);
}

DenoiserParams load_denoiser(const std::filesystem::path& path) {
  auto [text, values] = read_param_file(path);
  const auto header = nlohmann::json::parse(text);
  if (header.value("kind", "") != "denoiser") throw IoError("'" + path.string() + "' is not a denoiser");
  const auto& c = header.at("config");
  DenoiserParams p;
  p.config = {c.at("height").get<int>(),
              c.at("width").get<int>(),
              c.at("channels").get<int>(),
              c.at("coarse_channels").get<int>(),
              c.at("coarse_dilations").get<std::vector<int>>(),
              c.at("time_dim").get<int>()};
  p.seed = header.at("seed").get<std::uint64_t>();
  p.step_count = header.at("step_count").get<long>();
  p.values = std::move(values);
  if (p.values.size() != Denoiser(p.config).param_count()) {
    throw IoError("denoiser parameter count does not match its architecture");
  }
  return p;
}

}  // namespace sonardiff
