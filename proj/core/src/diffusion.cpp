#include "sonardiff/diffusion.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "sonardiff/dataset_io.hpp"
#include "sonardiff/random.hpp"

namespace sonardiff {
namespace {

constexpr std::uint64_t kStreamInitial = 11;
constexpr std::uint64_t kStreamNoise = 12;
constexpr std::uint64_t kStreamImage = 21;

void check_finite(const Plane& x, int t, const char* sampler) {
  for (double v : x.values()) {
    if (!std::isfinite(v)) {
      throw NumericalError(std::string(sampler) + ": non-finite state at step " + std::to_string(t), t);
    }
  }
}

Plane apply_step(const Plane& x, const Plane& eps_hat, const StepCoefficients& c, Rng* noise) {
  Plane out(x.height(), x.width());
  for (std::size_t i = 0; i < x.size(); ++i) {
    out[i] = c.x_coef * x[i] + c.eps_coef * eps_hat[i];
  }
  if (c.noise_std > 0.0 && noise) {
    for (auto& v : out.values()) v += c.noise_std * noise->normal();
  }
  return out;
}

Plane finish(const Plane& x0) {
  Plane p = from_model_space(x0);
  for (auto& v : p.values()) v = std::clamp(v, 0.0, 1.0);
  return p;
}

}  // namespace

Plane to_model_space(const Plane& pixels) {
  Plane x = pixels;
  for (auto& v : x.values()) v = 2.0 * v - 1.0;
  return x;
}

Plane from_model_space(const Plane& x) {
  Plane p = x;
  for (auto& v : p.values()) v = 0.5 * (v + 1.0);
  return p;
}

Plane forward_step(const Plane& x_prev, int t, const Plane& eps, const NoiseSchedule& schedule) {
  require_same_shape(x_prev, eps, "forward_step");
  const double a = std::sqrt(1.0 - schedule.beta(t));
  const double b = std::sqrt(schedule.beta(t));
  Plane out(x_prev.height(), x_prev.width());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * x_prev[i] + b * eps[i];
  return out;
}

Plane forward_closed(const Plane& x0, int t, const Plane& eps, const NoiseSchedule& schedule) {
  require_same_shape(x0, eps, "forward_closed");
  if (t < 1 || t > schedule.steps()) {
    throw InvalidArgument("forward_closed: t=" + std::to_string(t) + " out of range");
  }
  const double ab = schedule.alpha_bar(t);
  const double a = std::sqrt(ab);
  const double b = std::sqrt(1.0 - ab);
  Plane out(x0.height(), x0.width());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = a * x0[i] + b * eps[i];
  return out;
}

StepCoefficients ddpm_coefficients(const NoiseSchedule& schedule, int t) {
  const double alpha = schedule.alpha(t);
  const double ab = schedule.alpha_bar(t);
  StepCoefficients c;
  c.x_coef = 1.0 / std::sqrt(alpha);
  c.eps_coef = -schedule.beta(t) / (std::sqrt(alpha) * std::sqrt(1.0 - ab));
  c.noise_std = t > 1 ? std::sqrt(schedule.posterior_variance(t)) : 0.0;
  return c;
}

StepCoefficients ddim_coefficients(const NoiseSchedule& schedule, int t, int t_prev, double eta,
                                   bool* clamped) {
  if (t_prev < 0 || t_prev >= t) throw InvalidArgument("ddim_coefficients: need 0 <= t_prev < t");
  const double ab = schedule.alpha_bar(t);
  const double ab_prev = schedule.alpha_bar(t_prev);
  const double sigma =
      eta * std::sqrt((1.0 - ab_prev) / (1.0 - ab)) * std::sqrt(1.0 - ab / ab_prev);
  double dir2 = 1.0 - ab_prev - sigma * sigma;
  if (clamped) *clamped = false;
  if (dir2 < 0.0) {
    dir2 = 0.0;
    if (clamped) *clamped = true;
  }
  // x_prev = sqrt(ab_prev) * (x_t - sqrt(1-ab) eps) / sqrt(ab) + sqrt(dir2) eps + sigma z
  const double scale = std::sqrt(ab_prev / ab);
  StepCoefficients c;
  c.x_coef = scale;
  c.eps_coef = std::sqrt(dir2) - scale * std::sqrt(1.0 - ab);
  c.noise_std = sigma;
  return c;
}

void SamplerConfig::validate(const NoiseSchedule& schedule) const {
  if (kind == SamplerKind::DDIM && (steps < 1 || steps > schedule.steps())) {
    throw InvalidArgument("SamplerConfig: need 1 <= steps <= T");
  }
  if (!(eta >= 0.0 && eta <= 1.0)) throw InvalidArgument("SamplerConfig: eta outside [0,1]");
}

Plane sample_ddpm(const EpsPredictor& model, const NoiseSchedule& schedule, int height, int width,
                  std::uint64_t seed, Trajectory* trajectory) {
  Rng init(derive_seed(seed, kStreamInitial));
  Rng noise(derive_seed(seed, kStreamNoise));
  Plane x = init.normal_plane(height, width);
  if (trajectory) {
    trajectory->timesteps.push_back(schedule.steps());
    trajectory->states.push_back(x);
  }
  for (int t = schedule.steps(); t >= 1; --t) {
    const Plane eps_hat = model.predict(x, t);
    x = apply_step(x, eps_hat, ddpm_coefficients(schedule, t), &noise);
    check_finite(x, t, "sample_ddpm");
    if (trajectory) {
      trajectory->timesteps.push_back(t - 1);
      trajectory->states.push_back(x);
    }
  }
  return finish(x);
}

Plane sample_ddim(const EpsPredictor& model, const NoiseSchedule& schedule, int height, int width,
                  const SamplerConfig& config, Trajectory* trajectory) {
  config.validate(schedule);
  const auto seq = subsequence(schedule, config.steps);
  Rng init(derive_seed(config.seed, kStreamInitial));
  Rng noise(config.noise_seed.value_or(derive_seed(config.seed, kStreamNoise)));
  Plane x = init.normal_plane(height, width);
  if (trajectory) {
    trajectory->timesteps.push_back(seq.back());
    trajectory->states.push_back(x);
  }
  bool warned = false;
  for (std::size_t i = seq.size(); i-- > 0;) {
    const int t = seq[i];
    const int t_prev = i == 0 ? 0 : seq[i - 1];
    bool clamped = false;
    const auto c = ddim_coefficients(schedule, t, t_prev, config.eta, &clamped);
    if (clamped && !warned) {
      spdlog::warn("sample_ddim: 1 - alpha_bar_prev - sigma^2 < 0 at t={}, clamped to 0", t);
      warned = true;
    }
    const Plane eps_hat = model.predict(x, t);
    x = apply_step(x, eps_hat, c, &noise);
    check_finite(x, t, "sample_ddim");
    if (trajectory) {
      trajectory->timesteps.push_back(t_prev);
      trajectory->states.push_back(x);
    }
  }
  return finish(x);
}

Plane sample(const EpsPredictor& model, const NoiseSchedule& schedule, int height, int width,
             const SamplerConfig& config, Trajectory* trajectory) {
  if (config.kind == SamplerKind::DDPM) {
    return sample_ddpm(model, schedule, height, width, config.seed, trajectory);
  }
  return sample_ddim(model, schedule, height, width, config, trajectory);
}

Dataset generate_set(const EpsPredictor& model, const NoiseSchedule& schedule, int height,
                     int width, const SamplerConfig& config, int count, MineClass mine_class,
                     const Annotator& annotate) {
  if (count < 1) throw InvalidArgument("generate_set: n must be >= 1");
  config.validate(schedule);
  Dataset ds;
  ds.base_seed = config.seed;
  ds.items.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    SamplerConfig per = config;
    per.seed = derive_seed(config.seed, kStreamImage, static_cast<std::uint64_t>(i));
    per.noise_seed.reset();
    LabeledImage img;
    img.pixels = to_storable(sample(model, schedule, height, width, per));
    img.mask = annotate ? annotate(img.pixels) : Mask(height, width);
    img.mine_class = mask_count(img.mask) > 0 ? mine_class : MineClass::None;
    img.provenance = config.kind == SamplerKind::DDPM ? Provenance::DDPM : Provenance::DDIM;
    img.seed = per.seed;
    ds.items.push_back(std::move(img));
  }
  return ds;
}

void write_trajectory(const std::filesystem::path& dir, const Trajectory& trajectory) {
  std::filesystem::create_directories(dir);
  nlohmann::json index = nlohmann::json::array();
  for (std::size_t i = 0; i < trajectory.states.size(); ++i) {
    std::ostringstream name;
    name << "state_" << std::setw(4) << std::setfill('0') << i << ".f32";
    write_f32(dir / name.str(), trajectory.states[i]);
    index.push_back({{"file", name.str()}, {"t", trajectory.timesteps.at(i)},
                     {"height", trajectory.states[i].height()},
                     {"width", trajectory.states[i].width()}});
  }
  write_text_file(dir / "index.json", nlohmann::json{{"states", index}}.dump(2) + "\n");
}

}  // namespace sonardiff
