#include <benchmark/benchmark.h>

#include <vector>

#include "sonardiff/conv.hpp"
#include "sonardiff/denoiser.hpp"
#include "sonardiff/diffusion.hpp"
#include "sonardiff/gen_metrics.hpp"
#include "sonardiff/random.hpp"
#include "sonardiff/scene.hpp"
#include "sonardiff/segmenter.hpp"

using namespace sonardiff;

namespace {

std::vector<double> random_vec(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<double> v(n);
  for (auto& x : v) x = rng.normal();
  return v;
}

void BM_ConvForward(benchmark::State& state) {
  const int ch = static_cast<int>(state.range(0));
  const int hw = static_cast<int>(state.range(1));
  const auto in = random_vec(static_cast<std::size_t>(ch * hw * hw), 1);
  const auto w = random_vec(static_cast<std::size_t>(ch * ch * 9), 2);
  const std::vector<double> b(static_cast<std::size_t>(ch), 0.1);
  std::vector<double> out(in.size());
  for (auto _ : state) {
    conv::forward3x3(in, ch, hw, hw, w, b, ch, 2, out);
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * ch * ch * 9 * hw * hw);
}
BENCHMARK(BM_ConvForward)->Args({16, 32})->Args({32, 16})->Args({32, 32});

void BM_ConvBackward(benchmark::State& state) {
  const int ch = static_cast<int>(state.range(0));
  const int hw = static_cast<int>(state.range(1));
  const auto in = random_vec(static_cast<std::size_t>(ch * hw * hw), 1);
  const auto w = random_vec(static_cast<std::size_t>(ch * ch * 9), 2);
  const auto g = random_vec(in.size(), 3);
  std::vector<double> gin(in.size()), gw(w.size()), gb(static_cast<std::size_t>(ch));
  for (auto _ : state) {
    conv::backward3x3(in, ch, hw, hw, w, ch, 2, g, gin, gw, gb);
    benchmark::DoNotOptimize(gw.data());
  }
}
BENCHMARK(BM_ConvBackward)->Args({16, 32})->Args({32, 16});

void BM_DenoiserPredict(benchmark::State& state) {
  const auto schedule = NoiseSchedule::linear(200, 0.0005, 0.1);
  const Denoiser net(DenoiserConfig{});
  auto params = net.init(5);
  params.values = random_vec(params.values.size(), 6);
  for (auto& v : params.values) v *= 0.05;
  Rng rng(7);
  const Plane x = rng.normal_plane(32, 32);
  for (auto _ : state) benchmark::DoNotOptimize(net.predict_eps(params, x, 100, schedule));
}
BENCHMARK(BM_DenoiserPredict);

void BM_DenoiserLossGrad(benchmark::State& state) {
  const auto schedule = NoiseSchedule::linear(200, 0.0005, 0.1);
  const Denoiser net(DenoiserConfig{});
  const auto params = net.init(5);
  const auto ds = synth_dataset(16, {MineClass::Conical}, 3, 32, 32);
  std::vector<Plane> images;
  for (const auto& it : ds.items) images.push_back(it.pixels);
  const auto batch = probe_batch(images, 16, 9, schedule);
  for (auto _ : state) benchmark::DoNotOptimize(net.loss_and_grad(params, batch, schedule));
  state.SetItemsProcessed(state.iterations() * 16);
}
BENCHMARK(BM_DenoiserLossGrad);

void BM_DdimSample(benchmark::State& state) {
  const auto schedule = NoiseSchedule::linear(200, 0.0005, 0.1);
  const Denoiser net(DenoiserConfig{});
  const auto params = net.init(5);
  const DenoiserModel model(net, params, schedule);
  SamplerConfig cfg{SamplerKind::DDIM, static_cast<int>(state.range(0)), 0.0, 3, {}};
  for (auto _ : state) benchmark::DoNotOptimize(sample(model, schedule, 32, 32, cfg));
}
BENCHMARK(BM_DdimSample)->Arg(10)->Arg(50)->Unit(benchmark::kMillisecond);

void BM_Fid(benchmark::State& state) {
  const auto n = state.range(0);
  Rng rng(11);
  Eigen::MatrixXd a(n, 64), b(n, 64);
  for (Eigen::Index i = 0; i < a.size(); ++i) {
    a.data()[i] = rng.normal();
    b.data()[i] = rng.normal() + 0.1;
  }
  const auto sa = stats_from_features(a), sb = stats_from_features(b);
  for (auto _ : state) benchmark::DoNotOptimize(fid(sa, sb));
}
BENCHMARK(BM_Fid)->Arg(200);

}  // namespace

BENCHMARK_MAIN();
