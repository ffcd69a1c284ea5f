#include "sonardiff/segmenter.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "sonardiff/dataset_io.hpp"
#include "sonardiff/random.hpp"

namespace sonardiff {
namespace {

constexpr std::uint64_t kStreamInit = 50;
constexpr std::uint64_t kStreamOrder = 51;
constexpr double kDivergenceFactor = 10.0;
constexpr std::size_t kProbeSize = 16;

double softplus(double u) { return std::max(u, 0.0) + std::log1p(std::exp(-std::abs(u))); }
double sigmoid(double u) {
  return u >= 0 ? 1.0 / (1.0 + std::exp(-u)) : std::exp(u) / (1.0 + std::exp(u));
}

std::vector<ConvLayerShape> layer_shapes(const SegConfig& c) {
  return {{1, c.channels, 1}, {c.channels, c.channels, c.dilation}, {c.channels, 1, 1}};
}

}  // namespace

void SegConfig::validate() const {
  if (epochs < 0) throw InvalidArgument("SegConfig: epochs must be >= 0");
  if (batch_size < 1) throw InvalidArgument("SegConfig: batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw InvalidArgument("SegConfig: learning rate must be > 0");
  if (!(momentum >= 0.0 && momentum < 1.0)) throw InvalidArgument("SegConfig: momentum outside [0,1)");
  if (focal_gamma < 0.0 || focal_alpha < 0.0) throw InvalidArgument("SegConfig: negative focal parameter");
}

double bce_term(double logit, bool target) {
  const double a = target ? logit : -logit;
  return softplus(-a);
}

double focal_term(double logit, bool target, double gamma, double alpha) {
  const double a = target ? logit : -logit;
  const double one_minus_pt = sigmoid(-a);
  return alpha * std::pow(one_minus_pt, gamma) * softplus(-a);
}

PixelLoss bce_focal(double logit, bool target, double gamma, double alpha) {
  const double s = target ? 1.0 : -1.0;
  const double a = s * logit;
  const double pt = sigmoid(a);
  const double q = sigmoid(-a);  // 1 - p_t without cancellation
  const double nll = softplus(-a);
  const double qg = std::pow(q, gamma);
  PixelLoss r;
  r.loss = nll + alpha * qg * nll;
  const double d_bce = -q;
  const double d_focal = -alpha * qg * (gamma * pt * nll + q);
  r.dlogit = s * (d_bce + d_focal);
  return r;
}

Segmenter::Segmenter(const SegConfig& config)
    : config_(config), stack_(layer_shapes(config), config.height, config.width) {}

SegModel Segmenter::init(std::uint64_t seed) const {
  SegModel m;
  m.config = config_;
  m.config.seed = seed;
  m.values.assign(param_count(), 0.0);
  Rng rng(derive_seed(seed, kStreamInit));
  for (std::size_t l = 0; l < stack_.layer_count(); ++l) {
    const double bound = 1.0 / std::sqrt(9.0 * stack_.layer(l).in_channels);
    const auto off = stack_.weight_offset(l);
    for (std::size_t i = 0; i < stack_.weight_count(l); ++i) {
      m.values[off + i] = static_cast<float>(rng.uniform(-bound, bound));
    }
  }
  m.values[stack_.bias_offset(stack_.layer_count() - 1)] = config_.output_bias_init;
  return m;
}

Plane Segmenter::probabilities(const SegModel& model, const Plane& image) const {
  if (model.values.size() != param_count()) throw InvalidArgument("Segmenter: parameter count mismatch");
  if (image.height() != config_.height || image.width() != config_.width) {
    throw InvalidArgument("Segmenter: image shape mismatch");
  }
  thread_local ConvStack::Activations acts;
  const auto logits = stack_.forward(model.values, image.values(), {}, acts);
  Plane p(config_.height, config_.width);
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = sigmoid(logits[i]);
  return p;
}

double Segmenter::loss_and_grad(const SegModel& model, const std::vector<SegSample>& batch,
                                std::vector<double>* grad) const {
  if (batch.empty()) throw InvalidArgument("Segmenter: empty batch");
  if (model.values.size() != param_count()) throw InvalidArgument("Segmenter: parameter count mismatch");
  const double norm = 1.0 / (static_cast<double>(batch.size()) * config_.height * config_.width);
  if (grad) grad->assign(param_count(), 0.0);
  double sum = 0.0;
  ConvStack::Activations acts;
  std::vector<double> g;
  for (const auto& s : batch) {
    require_same_shape(*s.image, *s.mask, "Segmenter");
    if (s.image->height() != config_.height || s.image->width() != config_.width) {
      throw InvalidArgument("Segmenter: image shape mismatch");
    }
    const auto logits = stack_.forward(model.values, s.image->values(), {}, acts);
    g.resize(logits.size());
    for (std::size_t i = 0; i < logits.size(); ++i) {
      const auto pl = bce_focal(logits[i], (*s.mask)[i] != 0, config_.focal_gamma, config_.focal_alpha);
      sum += pl.loss;
      g[i] = pl.dlogit * norm;
    }
    if (grad) stack_.backward(model.values, s.image->values(), acts, g, *grad, {});
  }
  return sum * norm;
}

SegTrainResult train_seg(const Dataset& train, const SegConfig& config) {
  config.validate();
  if (train.items.empty()) throw InvalidArgument("train_seg: empty training set");
  const Segmenter net(config);
  SegTrainResult r;
  r.model = net.init(config.seed);

  std::vector<SegSample> probe;
  for (std::size_t i = 0; i < std::min(kProbeSize, train.size()); ++i) {
    const auto& it = train.items[i * train.size() / std::min(kProbeSize, train.size())];
    probe.push_back({&it.pixels, &it.mask});
  }
  r.initial_probe_loss = net.loss_and_grad(r.model, probe, nullptr);
  r.final_probe_loss = r.initial_probe_loss;
  if (config.epochs == 0) return r;

  const double bound = kDivergenceFactor * std::max(r.initial_probe_loss, 1e-12);
  Rng rng(derive_seed(config.seed, kStreamOrder));
  std::vector<std::size_t> order(train.size());
  std::vector<double> velocity(net.param_count(), 0.0), grad;
  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::shuffle(order.begin(), order.end(), rng.engine());
    for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
      std::vector<SegSample> batch;
      for (std::size_t i = start; i < end; ++i) {
        const auto& it = train.items[order[i]];
        batch.push_back({&it.pixels, &it.mask});
      }
      const double loss = net.loss_and_grad(r.model, batch, &grad);
      if (!std::isfinite(loss)) throw NumericalError("train_seg: non-finite loss", r.steps);
      if (loss > bound) {
        throw TrainingDiverged("train_seg: loss " + std::to_string(loss) + " exceeds 10x the initial probe loss");
      }
      for (std::size_t i = 0; i < velocity.size(); ++i) {
        velocity[i] = config.momentum * velocity[i] + grad[i];
        r.model.values[i] -= config.learning_rate * velocity[i];
      }
      ++r.steps;
      if (config.max_steps > 0 && r.steps >= config.max_steps) break;
    }
    if (config.max_steps > 0 && r.steps >= config.max_steps) break;
  }
  for (auto& v : r.model.values) v = static_cast<float>(v);
  r.model.step_count = r.steps;
  r.final_probe_loss = net.loss_and_grad(r.model, probe, nullptr);
  spdlog::debug("segmenter: {} steps, probe loss {:.4f} -> {:.4f}", r.steps, r.initial_probe_loss,
                r.final_probe_loss);
  return r;
}

double pixel_accuracy(const Segmenter& net, const SegModel& model, const LabeledImage& img,
                      double p_thresh) {
  const Plane p = net.probabilities(model, img.pixels);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < p.size(); ++i) correct += ((p[i] >= p_thresh) == (img.mask[i] != 0));
  return static_cast<double>(correct) / static_cast<double>(p.size());
}

void save_segmenter(const std::filesystem::path& path, const SegModel& model) {
  const auto& c = model.config;
  nlohmann::json header = {
      {"format", "sonardiff-params"},
      {"kind", "segmenter"},
      {"config", {{"height", c.height}, {"width", c.width}, {"channels", c.channels},
                  {"dilation", c.dilation}, {"focal_gamma", c.focal_gamma},
                  {"focal_alpha", c.focal_alpha}}},
      {"training", {{"epochs", c.epochs}, {"batch_size", c.batch_size},
                    {"learning_rate", c.learning_rate}, {"momentum", c.momentum},
                    {"output_bias_init", c.output_bias_init}, {"max_steps", c.max_steps}}},
      {"seed", c.seed},
      {"step_count", model.step_count},
      {"param_count", model.values.size()}};
  write_param_file(path, header.dump(), model.values);
}

SegModel load_segmenter(const std::filesystem::path& path) {
  auto [text, values] = read_param_file(path);
  const auto header = nlohmann::json::parse(text);
  if (header.value("kind", "") != "segmenter") throw IoError("'" + path.string() + "' is not a segmenter");
  const auto& c = header.at("config");
  SegModel m;
  m.config.height = c.at("height").get<int>();
  m.config.width = c.at("width").get<int>();
  m.config.channels = c.at("channels").get<int>();
  m.config.dilation = c.at("dilation").get<int>();
  m.config.focal_gamma = c.at("focal_gamma").get<double>();
  m.config.focal_alpha = c.at("focal_alpha").get<double>();
  const auto& tr = header.at("training");
  m.config.epochs = tr.at("epochs").get<int>();
  m.config.batch_size = tr.at("batch_size").get<int>();
  m.config.learning_rate = tr.at("learning_rate").get<double>();
  m.config.momentum = tr.at("momentum").get<double>();
  m.config.output_bias_init = tr.at("output_bias_init").get<double>();
  m.config.max_steps = tr.at("max_steps").get<long>();
  m.config.seed = header.at("seed").get<std::uint64_t>();
  m.step_count = header.at("step_count").get<long>();
  m.values = std::move(values);
  if (m.values.size() != Segmenter(m.config).param_count()) {
    throw IoError("segmenter parameter count does not match its architecture");
  }
  return m;
}

}  // namespace sonardiff
