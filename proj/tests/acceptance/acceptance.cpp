// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits nonzero if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <functional>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <CLI11.hpp>

#include "fixtures.hpp"
#include "match_fixtures.hpp"
#include "sonardiff/denoiser.hpp"
#include "sonardiff/diffusion.hpp"
#include "sonardiff/error.hpp"
#include "sonardiff/gen_metrics.hpp"
#include "sonardiff/harness.hpp"
#include "sonardiff/random.hpp"
#include "sonardiff/seg_eval.hpp"
#include "sonardiff/segmenter.hpp"

using namespace sonardiff;
using sonardiff::testing::max_abs_diff;
using sonardiff::testing::rel_err;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

// Collects sub-check failures for one criterion.
struct Check {
  bool ok = true;
  std::ostringstream notes;
  std::vector<std::pair<std::string, bool>> results;

  void expect(bool cond, const std::string& what) {
    results.emplace_back(what, cond);
    if (!cond) {
      ok = false;
      notes << " [failed: " << what << "]";
    }
  }
  template <typename T>
  void note(const std::string& key, T value) {
    notes << ' ' << key << '=' << value;
  }
};

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw IoError("cannot read " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// ---------------------------------------------------------------- AC1

void forward_process(Check& c) {
  const auto t0 = Clock::now();
  const auto s = ExperimentConfig{}.make_schedule();
  const int T = s.steps();
  c.expect(T == 200, "T == 200");

  const auto img = to_model_space(synth_scene(random_scene_spec(MineClass::Conical, 1)).pixels);
  const Plane zero(img.height(), img.width(), 0.0);
  Plane x = img;
  double worst = 0.0;
  for (int t = 1; t <= T; ++t) {
    x = forward_step(x, t, zero, s);
    worst = std::max(worst, max_abs_diff(x, forward_closed(img, t, zero, s)));
  }
  c.note("closed_form_err", worst);
  c.expect(worst <= 1e-6, "iterated zero-noise chain within 1e-6 of closed form");

  // Monte Carlo over the iterated chain on an 8x8 crop.
  const int n = 10000, side = 8, P = side * side;
  Plane x0(side, side);
  for (int y = 0; y < side; ++y)
    for (int xx = 0; xx < side; ++xx) x0(y, xx) = img(12 + y, 12 + xx);
  const std::set<int> probes = {1, 50, 100, 200};
  std::map<int, std::pair<double, double>> sums;  // t -> (sum r, sum r^2)
  Rng rng(derive_seed(1, 1));
  for (int draw = 0; draw < n; ++draw) {
    Plane xt = x0;
    for (int t = 1; t <= T; ++t) {
      xt = forward_step(xt, t, rng.normal_plane(side, side), s);
      if (!probes.count(t)) continue;
      const double a = std::sqrt(s.alpha_bar(t));
      auto& [s1, s2] = sums[t];
      for (int i = 0; i < P; ++i) {
        const double r = xt[static_cast<std::size_t>(i)] - a * x0[static_cast<std::size_t>(i)];
        s1 += r;
        s2 += r * r;
      }
    }
  }
  const double count = static_cast<double>(n) * P;
  double worst_z = 0.0, worst_var = 0.0;
  for (const auto& [t, sv] : sums) {
    const double var_true = 1.0 - s.alpha_bar(t);
    const double mean = sv.first / count;
    const double var = sv.second / count - mean * mean;
    worst_z = std::max(worst_z, std::abs(mean) / std::sqrt(var_true / count));
    worst_var = std::max(worst_var, std::abs(var / var_true - 1.0));
  }
  c.note("mean_z", worst_z);
  c.note("var_rel", worst_var);
  c.expect(worst_z <= 3.0, "Monte Carlo mean within 3 SE");
  c.expect(worst_var <= 0.05, "Monte Carlo variance within 5%");
  const double el = seconds_since(t0);
  c.note("seconds", el);
  c.expect(el < 30.0, "under 30 s");
}

// ---------------------------------------------------------------- AC2

void samplers(Check& c) {
  const auto cfg = ExperimentConfig{};
  const auto s = cfg.make_schedule();
  const Denoiser net(cfg.denoiser);
  auto params = net.init(3);
  Rng rng(4);
  for (auto& v : params.values) v += 0.01 * rng.normal();  // the zero output layer would hide everything
  const DenoiserModel model(net, params, s);

  SamplerConfig ddim{SamplerKind::DDIM, 50, 0.0, 9, std::nullopt};
  const auto a = sample(model, s, 32, 32, ddim);
  const auto b = sample(model, s, 32, 32, ddim);
  ddim.noise_seed = 12345;
  const auto d = sample(model, s, 32, 32, ddim);
  c.expect(a == b && a == d, "DDIM eta=0 bit-deterministic");

  double coef = 0.0;
  for (int t = 1; t <= s.steps(); ++t) {
    const auto p = ddpm_coefficients(s, t);
    const auto q = ddim_coefficients(s, t, t - 1, 1.0);
    coef = std::max({coef, std::abs(p.x_coef - q.x_coef), std::abs(p.eps_coef - q.eps_coef),
                     std::abs(p.noise_std - q.noise_std)});
  }
  c.note("coef_err", coef);
  c.expect(coef <= 1e-10, "DDIM(eta=1, S=T) coefficients equal DDPM");

  const CountingPredictor count_ddim(model), count_ddpm(model);
  sample(count_ddim, s, 32, 32, SamplerConfig{SamplerKind::DDIM, 50, 0.0, 1, std::nullopt});
  sample(count_ddpm, s, 32, 32, SamplerConfig{SamplerKind::DDPM, 0, 0.0, 1, std::nullopt});
  c.note("evals_ddim", count_ddim.calls());
  c.note("evals_ddpm", count_ddpm.calls());
  c.expect(count_ddim.calls() == 50 && count_ddpm.calls() == s.steps(), "50 vs T evaluations");

  const auto tddpm = time_inference([&] { sample_ddpm(model, s, 32, 32, 5); }, 5);
  const auto tddim = time_inference([&] { sample(model, s, 32, 32, SamplerConfig{SamplerKind::DDIM, 50, 0.0, 5, std::nullopt}); }, 5);
  const double ratio = tddpm.median_seconds / tddim.median_seconds;
  c.note("time_ratio", ratio);
  c.expect(ratio >= 3.0, "DDPM/DDIM wall-time ratio >= 3");
}

// ---------------------------------------------------------------- AC3

template <typename Loss>
std::pair<int, double> fd_check(std::vector<double>& values, const std::vector<double>& grad, Loss loss) {
  int checked = 0;
  double worst = 0.0;
  const std::size_t stride = std::max<std::size_t>(1, values.size() / 160);
  for (std::size_t i = 0; i < values.size(); i += stride) {
    const double h = 1e-5, keep = values[i];
    values[i] = keep + h;
    const double up = loss();
    values[i] = keep - h;
    const double down = loss();
    values[i] = keep;
    const double fd = (up - down) / (2 * h);
    if (std::abs(fd) < 1e-8 && std::abs(grad[i]) < 1e-8) continue;
    worst = std::max(worst, rel_err(grad[i], fd));
    ++checked;
  }
  return {checked, worst};
}

void gradients(Check& c) {
  const auto cfg = ExperimentConfig{};
  const auto s = cfg.make_schedule();
  std::vector<Plane> imgs;
  for (const auto& it : synth_dataset(2, {MineClass::Conical}, 5).items) imgs.push_back(it.pixels);

  const Denoiser net(cfg.denoiser);
  auto params = net.init(6);
  Rng rng(7);
  for (auto& v : params.values) v += 0.02 * rng.normal();
  const auto batch = probe_batch(imgs, 2, 8, s);
  const auto lg = net.loss_and_grad(params, batch, s);
  const auto [dn, dworst] = fd_check(params.values, lg.grad, [&] { return net.loss(params, batch, s); });
  c.note("denoiser_coords", dn);
  c.note("denoiser_rel_err", dworst);
  c.expect(dn >= 100 && dworst <= 1e-3, "denoiser gradient");

  const Segmenter seg(cfg.segmenter);
  auto model = seg.init(9);
  for (auto& v : model.values) v += 0.02 * rng.normal();
  const auto ds = synth_dataset(2, {MineClass::Conical}, 10);
  std::vector<SegSample> sb;
  for (const auto& it : ds.items) sb.push_back({&it.pixels, &it.mask});
  std::vector<double> grad;
  seg.loss_and_grad(model, sb, &grad);
  const auto [sn, sworst] = fd_check(model.values, grad, [&] { return seg.loss_and_grad(model, sb, nullptr); });
  c.note("segmenter_coords", sn);
  c.note("segmenter_rel_err", sworst);
  c.expect(sn >= 100 && sworst <= 1e-3, "segmenter gradient");
}

// ---------------------------------------------------------------- AC4

FeatureStats stats_1d(double mu, double var) {
  return {Eigen::VectorXd::Constant(1, mu), Eigen::MatrixXd::Constant(1, 1, var), 2};
}

void metric_oracles(Check& c) {
  const FeatureEmbedder emb;
  std::vector<Plane> a, b;
  for (const auto& it : synth_dataset(80, {MineClass::Conical}, 11).items) a.push_back(it.pixels);
  for (const auto& it : synth_dataset(80, {MineClass::Cylindrical}, 12).items) b.push_back(it.pixels);
  const auto sa = embed_stats(a, emb), sb = embed_stats(b, emb);
  c.note("fid_aa", fid(sa, sa));
  c.expect(std::abs(fid(sa, sa)) <= 1e-9, "FID(a,a) = 0 to 1e-9");

  const double oned = std::abs(fid(stats_1d(0, 1), stats_1d(1, 4)) - 2.0);
  c.note("fid_1d_err", oned);
  c.expect(oned <= 1e-9, "1-D FID exact");

  Rng rng(13);
  Eigen::VectorXd v(sa.mean.size());
  for (int i = 0; i < v.size(); ++i) v(i) = 0.1 * rng.normal();
  auto shifted = sb;
  shifted.mean += v;
  const double law = std::abs(fid(sa, shifted) - (fid(sa, sb) + v.squaredNorm() + 2.0 * v.dot(sb.mean - sa.mean)));
  c.note("mean_shift_err", law);
  c.expect(law <= 1e-6, "mean-shift law");

  const Eigen::MatrixXd root = sqrtm_psd(sa.cov);
  const double sq = (root * root - sa.cov).norm() / sa.cov.norm();
  c.note("sqrtm_rel", sq);
  c.expect(sq < 1e-8, "sqrtm residual");

  const auto fa = emb.embed_all(a);
  const double sigma = median_bandwidth(fa, fa);
  c.expect(kid(fa, fa, sigma) == 0.0, "KID(X,X) = 0");
  const Eigen::MatrixXd x1 = fa.topRows(1), y1 = emb.embed_all({b[0]});
  const double k = rbf_kernel(std::span<const double>(x1.data(), x1.size()),
                              std::span<const double>(y1.data(), y1.size()), sigma);
  const double single = std::abs(kid(x1, y1, sigma) - (2.0 - 2.0 * k));
  c.note("kid_single_err", single);
  c.expect(single <= 1e-12, "KID n=m=1 equals 2-2k");

  const double ten = snr_of_values(std::vector<double>{9.0, 11.0}).snr_db;
  const double zero = snr_of_values(std::vector<double>{0.0, 2.0}).snr_db;
  c.note("snr_10", ten);
  c.note("snr_0", zero);
  c.expect(std::abs(ten - 10.0) <= 1e-12 && std::abs(zero) <= 1e-12, "SNR 10 dB and 0 dB cases");
}

// ---------------------------------------------------------------- AC5

void matching_and_ap(Check& c) {
  Rng rng(14);
  int mismatches = 0, fixtures = 0;
  for (int trial = 0; trial < 300; ++trial) {
    const auto im = sonardiff::testing::random_match_fixture(rng);
    for (double k : iou_thresholds()) {
      mismatches += match_greedy(im.preds, im.gts, k).true_positives !=
                    sonardiff::testing::exhaustive_tp(im.preds, im.gts, k);
    }
    ++fixtures;
  }
  c.note("greedy_mismatches", mismatches);
  c.expect(mismatches == 0, "greedy equals exhaustive matching");

  int increasing = 0, sets = 0;
  while (sets < 100) {
    std::vector<ImageEval> set;
    for (int i = 0; i < 4; ++i) set.push_back(sonardiff::testing::random_match_fixture(rng));
    try {
      const auto curve = precision_curve(set);
      for (std::size_t i = 0; i + 1 < curve.size(); ++i) increasing += curve[i + 1] > curve[i];
      ++sets;
    } catch (const UndefinedPrecision&) {
    }
  }
  c.note("monotonicity_violations", increasing);
  c.expect(increasing == 0, "ap_at non-increasing in k");

  double flat = 0.0;
  for (double p : {0.0, 0.3, 0.579, 1.0}) {
    std::array<double, 10> curve;
    curve.fill(p);
    flat = std::max(flat, std::abs(aupc_from_curve(curve) - 0.45 * p));
  }
  c.note("aupc_flat_err", flat);
  c.expect(flat <= 1e-15, "constant-precision AUPC = 0.45 p");
  c.note("aupc_arith", 0.45 * 0.579);
  c.expect(std::abs(0.45 * 0.579 - 0.264) <= 0.01, "0.45 * 0.579 near 0.264");
}

// ---------------------------------------------------------------- AC6

void overfit(Check& c) {
  const auto t0 = Clock::now();
  const auto cfg = ExperimentConfig{};
  const auto s = cfg.make_schedule();
  const auto image = synth_dataset(1, {MineClass::Conical}, 15).items[0];

  // The single image fills every slot of a batch of 4.
  const std::vector<Plane> images(4, image.pixels);
  TrainConfig tc = cfg.diffusion_train;
  tc.batch_size = 4;
  tc.epochs = 5000;
  tc.seed = 16;
  const Denoiser net(cfg.denoiser);
  const auto trained = train(net, images, tc, s);
  const DenoiserModel model(net, trained.params, s);
  const auto rec = sample(model, s, image.pixels.height(), image.pixels.width(),
                          SamplerConfig{SamplerKind::DDIM, cfg.ddim_steps, 0.0, 17, std::nullopt});
  const double linf = max_abs_diff(rec, image.pixels);
  c.note("diffusion_steps", trained.steps);
  c.note("diffusion_linf", linf);
  c.expect(linf <= 0.15, "diffusion reconstructs the single image within L-inf 0.15");

  SegConfig sc = cfg.segmenter;
  sc.epochs = 400;
  sc.batch_size = 1;
  sc.seed = 18;
  Dataset one;
  one.items.push_back(image);
  const auto seg = train_seg(one, sc);
  const double acc = pixel_accuracy(Segmenter(sc), seg.model, image);
  c.note("seg_pixel_acc", acc);
  c.expect(acc > 0.95, "segmenter pixel accuracy > 0.95");

  const double el = seconds_since(t0);
  c.note("seconds", el);
  c.expect(el < 300.0, "under 5 min");
}

// ---------------------------------------------------------------- AC7 / AC8

const EvalRow* find_row(const std::vector<EvalRow>& rows, const std::string& name) {
  for (const auto& r : rows)
    if (r.name == name) return &r;
  return nullptr;
}

void desk_experiment(Check& c7, Check& c8, const std::filesystem::path& dir) {
  const auto t0 = Clock::now();
  ExperimentConfig cfg;
  cfg.out_dir = dir;
  const auto report = run_experiment(cfg);
  const double el = seconds_since(t0);

  const auto rows = parse_eval_table_csv(slurp(dir / "table3.csv"));
  c7.expect(rows.size() == 7, "table3 has 7 rows");
  for (const auto& r : report.seg_rows) {
    c7.expect(r.avg == (r.ap50 + r.ap75 + r.ap90) / 3.0, "exact Avg for " + r.name);
  }
  for (const auto& r : rows) {
    c7.expect(std::abs(r.avg - (r.ap50 + r.ap75 + r.ap90) / 3.0) <= 1.5e-6, "printed Avg for " + r.name);
  }
  const auto* orig = find_row(rows, "Original");
  const auto* all = find_row(rows, "DDPM+DDIM+Original");
  if (orig && all) {
    c7.note("orig_ap50", orig->ap50);
    c7.note("all_ap50", all->ap50);
    c7.note("orig_ap50_95", orig->ap50_95);
    c7.note("all_ap50_95", all->ap50_95);
    c7.expect(all->ap50 >= orig->ap50, "combined AP_50 >= Original");
    c7.expect(all->ap50_95 >= orig->ap50_95, "combined AP_50:95 >= Original");
  } else {
    c7.expect(false, "Original and DDPM+DDIM+Original rows present");
  }
  c7.note("seconds", el);
  c7.expect(el < 900.0, "under 15 min");

  c8.note("samples", std::min(cfg.ddpm_count, cfg.ddim_count));
  c8.expect(std::min(cfg.ddpm_count, cfg.ddim_count) >= 100, ">= 100 samples");
  c8.expect(cfg.ddim_steps * 4 == cfg.schedule.steps && cfg.ddim_eta == 0.0, "DDIM S = T/4, eta = 0");
  c8.note("ddpm_pixel_std", report.ddpm_pixel_std);
  c8.note("ddim_pixel_std", report.ddim_pixel_std);
  c8.expect(report.ddim_pixel_std >= report.ddpm_pixel_std, "DDIM pixel std >= DDPM");
  const auto noise = parse_noise_table_csv(slurp(dir / "table2.csv"));
  const NoiseRow *p = nullptr, *d = nullptr;
  for (const auto& r : noise) {
    if (r.model == "DDPM") p = &r;
    if (r.model == "DDIM") d = &r;
  }
  c8.expect(p && d, "table2 has DDPM and DDIM rows");
  if (p && d) {
    c8.note("table2_ratio", d->noise_ratio_vs_ddpm);
    c8.expect(std::abs(d->noise_ratio_vs_ddpm - d->avg_noise / p->avg_noise) <= 1e-5, "table2 ratio column");
    c8.expect(d->avg_noise >= p->avg_noise, "table2 DDIM noise >= DDPM");
  }
}

// ---------------------------------------------------------------- AC9

void reproducibility(Check& c, const std::filesystem::path& root) {
  auto cfg = experiment_config_from_json(R"({"seed": 21, "originals": 24, "test_size": 24,
    "diffusion_train": {"epochs": 20},
    "sampling": {"ddpm_count": 16, "ddim_count": 16},
    "segmenter": {"epochs": 10},
    "metrics": {"measure_inference_time": false}})");
  cfg.out_dir = root / "run_a";
  run_experiment(cfg);
  cfg.out_dir = root / "run_b";
  run_experiment(cfg);
  for (const char* f : {"table1.csv", "table2.csv", "table3.csv", "claims.json"}) {
    c.expect(slurp(root / "run_a" / f) == slurp(root / "run_b" / f), std::string(f) + " byte-identical");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sonardiff acceptance checks"};
  std::filesystem::path work = "acceptance_work";
  std::vector<int> only;
  app.add_option("--work-dir", work, "scratch directory for experiment outputs");
  app.add_option("--only", only, "run only these criteria (1-9)");
  std::vector<std::string> xfail;
  app.add_option("--xfail", xfail, "sub-check known to fail; still printed as FAIL but not counted in the exit code");
  CLI11_PARSE(app, argc, argv);
  std::filesystem::create_directories(work);

  const auto wanted = [&](int id) { return only.empty() || std::find(only.begin(), only.end(), id) != only.end(); };
  int failures = 0;
  const auto report = [&](int id, const char* title, Check& c) {
    const auto known = [&](const std::string& what) {
      return std::find(xfail.begin(), xfail.end(), what) != xfail.end();
    };
    bool counted = false;
    for (const auto& [what, passed] : c.results) {
      if (!passed && !known(what)) counted = true;
      if (passed && known(what)) c.notes << " [xfail now passes: " << what << "]";
    }
    if (!c.ok && !counted) c.notes << " [expected failure]";
    std::printf("AC%d %s %s:%s\n", id, c.ok ? "PASS" : "FAIL", title, c.notes.str().c_str());
    std::fflush(stdout);
    failures += counted;
  };
  const auto run = [&](int id, const char* title, const std::function<void(Check&)>& fn) {
    if (!wanted(id)) return;
    Check c;
    try {
      fn(c);
    } catch (const std::exception& e) {
      c.expect(false, std::string("exception: ") + e.what());
    }
    report(id, title, c);
  };

  run(1, "forward process", forward_process);
  run(2, "samplers", samplers);
  run(3, "gradients", gradients);
  run(4, "metric oracles", metric_oracles);
  run(5, "matching and AP", matching_and_ap);
  run(6, "overfit", overfit);
  if (wanted(7) || wanted(8)) {
    Check c7, c8;
    try {
      desk_experiment(c7, c8, work / "desk");
    } catch (const std::exception& e) {
      c7.expect(false, std::string("exception: ") + e.what());
      c8.expect(false, "desk experiment did not finish");
    }
    if (wanted(7)) report(7, "desk experiment", c7);
    if (wanted(8)) report(8, "sample noise", c8);
  }
  run(9, "reproducibility", [&](Check& c) { reproducibility(c, work / "repro"); });
  return failures == 0 ? 0 : 1;
}
