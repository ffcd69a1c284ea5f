#include <gtest/gtest.h>

#include <cmath>
#include <fstream>

#include "fixtures.hpp"
#include "sonardiff/denoiser.hpp"
#include "sonardiff/diffusion.hpp"
#include "sonardiff/error.hpp"
#include "sonardiff/random.hpp"
#include "sonardiff/scene.hpp"

using namespace sonardiff;

namespace {

// Knows the single training image, so it can return the exact noise.
class OracleDenoiser final : public EpsPredictor {
 public:
  OracleDenoiser(Plane x0, const NoiseSchedule& s) : x0_(std::move(x0)), s_(s) {}
  Plane predict(const Plane& x_t, int t) const override {
    Plane e(x_t.height(), x_t.width());
    const double a = std::sqrt(s_.alpha_bar(t)), b = std::sqrt(1.0 - s_.alpha_bar(t));
    for (std::size_t i = 0; i < e.size(); ++i) e[i] = (x_t[i] - a * x0_[i]) / b;
    return e;
  }

 private:
  Plane x0_;
  const NoiseSchedule& s_;
};

class ConstantDenoiser final : public EpsPredictor {
 public:
  explicit ConstantDenoiser(double v) : v_(v) {}
  Plane predict(const Plane& x_t, int) const override { return Plane(x_t.height(), x_t.width(), v_); }

 private:
  double v_;
};

class NanDenoiser final : public EpsPredictor {
 public:
  Plane predict(const Plane& x_t, int t) const override {
    return Plane(x_t.height(), x_t.width(), t == 3 ? std::nan("") : 0.0);
  }
};

Plane target_image() { return synth_scene(random_scene_spec(MineClass::Conical, 42)).pixels; }

}  // namespace

TEST(Forward, StepExamples) {
  const auto s = NoiseSchedule::from_betas({0.04, 0.0});
  const Plane ones(2, 2, 1.0);
  const auto x = forward_step(ones, 1, ones, s);
  for (double v : x.values()) EXPECT_NEAR(v, std::sqrt(0.96) + 0.2, 1e-15);
  EXPECT_NEAR(x[0], 1.17980, 1e-5);
  const Plane zero(2, 2, 0.0);
  EXPECT_EQ(forward_step(ones, 2, ones, s), ones);  // beta = 0
  const auto clean = forward_step(ones, 1, zero, s);
  for (double v : clean.values()) EXPECT_EQ(v, std::sqrt(0.96));
  EXPECT_THROW(forward_step(ones, 1, Plane(3, 2), s), InvalidArgument);
}

TEST(Forward, ClosedFormDegenerateAndZeroNoise) {
  const auto flat = NoiseSchedule::from_betas({0.0, 0.0});
  Rng rng(1);
  const auto x0 = rng.normal_plane(4, 4);
  EXPECT_EQ(forward_closed(x0, 2, rng.normal_plane(4, 4), flat), x0);
  const auto s = NoiseSchedule::linear(200, 0.0005, 0.1);
  EXPECT_THROW(forward_closed(x0, 201, x0, s), InvalidArgument);
  EXPECT_THROW(forward_closed(x0, 0, x0, s), InvalidArgument);
}

TEST(Forward, IteratedZeroNoiseEqualsClosedForm) {
  const auto s = NoiseSchedule::linear(200, 0.0005, 0.1);
  const auto x0 = to_model_space(target_image());
  const Plane zero(x0.height(), x0.width(), 0.0);
  Plane x = x0;
  for (int t = 1; t <= s.steps(); ++t) {
    x = forward_step(x, t, zero, s);
    ASSERT_LE(sonardiff::testing::max_abs_diff(x, forward_closed(x0, t, zero, s)), 1e-6) << "t=" << t;
  }
}

TEST(Sampler, DdpmCoefficientsMatchHandFormula) {
  const auto s = NoiseSchedule::linear(200, 0.0005, 0.1);
  for (int t : {1, 2, 100, 200}) {
    const auto c = ddpm_coefficients(s, t);
    EXPECT_DOUBLE_EQ(c.x_coef, 1.0 / std::sqrt(s.alpha(t)));
    EXPECT_NEAR(c.eps_coef, -s.beta(t) / (std::sqrt(s.alpha(t)) * std::sqrt(1.0 - s.alpha_bar(t))), 1e-15);
    const double var = (1.0 - s.alpha_bar(t - 1)) / (1.0 - s.alpha_bar(t)) * s.beta(t);
    EXPECT_NEAR(c.noise_std, std::sqrt(var), 1e-15);
  }
  EXPECT_EQ(ddpm_coefficients(s, 1).noise_std, 0.0);
}

TEST(Sampler, DdimEtaOneFullLengthIsDdpm) {
  const auto s = NoiseSchedule::linear(200, 0.0005, 0.1);
  const auto seq = subsequence(s, 200);
  for (std::size_t i = 0; i < seq.size(); ++i) {
    const int t = seq[i];
    const auto a = ddim_coefficients(s, t, i == 0 ? 0 : seq[i - 1], 1.0);
    const auto b = ddpm_coefficients(s, t);
    EXPECT_NEAR(a.x_coef, b.x_coef, 1e-10);
    EXPECT_NEAR(a.eps_coef, b.eps_coef, 1e-10);
    EXPECT_NEAR(a.noise_std, b.noise_std, 1e-10);
  }
}

TEST(Sampler, SingleStepDdpmByHand) {
  const auto s = NoiseSchedule::from_betas({0.1});
  const ConstantDenoiser model(0.5);
  Trajectory traj;
  const auto out = sample_ddpm(model, s, 3, 3, 9, &traj);
  ASSERT_EQ(traj.states.size(), 2u);
  for (std::size_t i = 0; i < out.size(); ++i) {
    const double x1 = traj.states[0][i];
    const double x0 = (x1 - 0.1 / std::sqrt(0.1) * 0.5) / std::sqrt(0.9);
    EXPECT_NEAR(traj.states[1][i], x0, 1e-15);
    EXPECT_DOUBLE_EQ(out[i], std::clamp(0.5 * (x0 + 1.0), 0.0, 1.0));
  }
}

TEST(Sampler, OracleDenoiserReconstructsTheImage) {
  const auto s = NoiseSchedule::linear(200, 0.0005, 0.1);
  const auto img = target_image();
  const OracleDenoiser model(to_model_space(img), s);
  for (std::uint64_t seed : {1u, 2u, 3u}) {
    EXPECT_LE(sonardiff::testing::max_abs_diff(sample_ddpm(model, s, 32, 32, seed), img), 0.15);
    const SamplerConfig ddim{SamplerKind::DDIM, 50, 0.0, seed, {}};
    EXPECT_LE(sonardiff::testing::max_abs_diff(sample_ddim(model, s, 32, 32, ddim), img), 0.15);
  }
}

TEST(Sampler, Determinism) {
  const auto s = NoiseSchedule::linear(40, 0.001, 0.2);
  DenoiserConfig dc;
  dc.height = dc.width = 8;
  dc.channels = 4;
  dc.coarse_channels = 4;
  dc.coarse_dilations = {1};
  dc.time_dim = 8;
  const Denoiser net(dc);
  auto p = net.init(3);
  Rng rng(4);
  for (auto& v : p.values) v += 0.1 * rng.normal();
  const DenoiserModel model(net, p, s);

  EXPECT_EQ(sample_ddpm(model, s, 8, 8, 5), sample_ddpm(model, s, 8, 8, 5));
  EXPECT_NE(sample_ddpm(model, s, 8, 8, 5), sample_ddpm(model, s, 8, 8, 6));

  SamplerConfig c{SamplerKind::DDIM, 10, 0.0, 5, std::uint64_t{1}};
  const auto a = sample_ddim(model, s, 8, 8, c);
  c.noise_seed = 999;
  EXPECT_EQ(sample_ddim(model, s, 8, 8, c), a);  // eta = 0 ignores z
  c.eta = 0.5;
  const auto b = sample_ddim(model, s, 8, 8, c);
  c.noise_seed = 1;
  EXPECT_NE(sample_ddim(model, s, 8, 8, c), b);
}

TEST(Sampler, EvaluationCounts) {
  const auto s = NoiseSchedule::linear(200, 0.0005, 0.1);
  const ConstantDenoiser inner(0.0);
  CountingPredictor ddpm(inner), ddim(inner);
  sample_ddpm(ddpm, s, 4, 4, 1);
  sample_ddim(ddim, s, 4, 4, SamplerConfig{SamplerKind::DDIM, 50, 0.0, 1, {}});
  EXPECT_EQ(ddpm.calls(), 200);
  EXPECT_EQ(ddim.calls(), 50);
}

TEST(Sampler, NanAbortsWithStep) {
  const auto s = NoiseSchedule::linear(10, 0.01, 0.1);
  const NanDenoiser model;
  try {
    sample_ddpm(model, s, 4, 4, 1);
    FAIL() << "expected NumericalError";
  } catch (const NumericalError& e) {
    EXPECT_EQ(e.step(), 3);
  }
}

TEST(Sampler, ConfigValidation) {
  const auto s = NoiseSchedule::linear(20, 0.01, 0.1);
  EXPECT_THROW((SamplerConfig{SamplerKind::DDIM, 21, 0.0, 0, {}}.validate(s)), InvalidArgument);
  EXPECT_THROW((SamplerConfig{SamplerKind::DDIM, 5, 1.5, 0, {}}.validate(s)), InvalidArgument);
  EXPECT_THROW((SamplerConfig{SamplerKind::DDIM, 0, 0.0, 0, {}}.validate(s)), InvalidArgument);
}

TEST(GenerateSet, ProvenanceSeedsAndDeterminism) {
  const auto s = NoiseSchedule::linear(20, 0.01, 0.1);
  const ConstantDenoiser model(0.1);
  const Annotator none = [](const Plane& p) { return Mask(p.height(), p.width()); };
  const SamplerConfig c{SamplerKind::DDPM, 20, 1.0, 77, {}};
  const auto a = generate_set(model, s, 8, 8, c, 5, MineClass::Conical, none);
  ASSERT_EQ(a.size(), 5u);
  for (const auto& it : a.items) {
    EXPECT_EQ(it.provenance, Provenance::DDPM);
    EXPECT_EQ(it.mine_class, MineClass::None);  // empty annotation
  }
  EXPECT_EQ(a, generate_set(model, s, 8, 8, c, 5, MineClass::Conical, none));
  EXPECT_EQ(generate_set(model, s, 8, 8, c, 1, MineClass::Conical, none).size(), 1u);
  const Annotator all = [](const Plane& p) { return Mask(p.height(), p.width(), 1); };
  const SamplerConfig d{SamplerKind::DDIM, 5, 0.0, 77, {}};
  for (const auto& it : generate_set(model, s, 8, 8, d, 3, MineClass::Conical, all).items) {
    EXPECT_EQ(it.provenance, Provenance::DDIM);
    EXPECT_EQ(it.mine_class, MineClass::Conical);
  }
}

TEST(Trajectory, DumpWritesEveryState) {
  const auto s = NoiseSchedule::linear(12, 0.01, 0.1);
  const ConstantDenoiser model(0.0);
  Trajectory traj;
  sample_ddim(model, s, 4, 4, SamplerConfig{SamplerKind::DDIM, 4, 0.0, 1, {}}, &traj);
  EXPECT_EQ(traj.states.size(), 5u);
  EXPECT_EQ(traj.timesteps, (std::vector<int>{12, 9, 6, 3, 0}));
  const auto dir = sonardiff::testing::scratch_dir("traj");
  write_trajectory(dir, traj);
  EXPECT_TRUE(std::filesystem::exists(dir / "index.json"));
  std::size_t files = 0;
  for (const auto& e : std::filesystem::directory_iterator(dir)) files += e.path().extension() == ".f32";
  EXPECT_EQ(files, 5u);
}
