#include "sonardiff/harness.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>
#include <spdlog/spdlog.h>

#include "sonardiff/dataset_io.hpp"
#include "sonardiff/random.hpp"

namespace sonardiff {
namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr std::uint64_t kStreamOriginals = 101;
constexpr std::uint64_t kStreamAugment = 102;
constexpr std::uint64_t kStreamTest = 103;
constexpr std::uint64_t kStreamDiffusion = 104;
constexpr std::uint64_t kStreamDdpm = 105;
constexpr std::uint64_t kStreamDdim = 106;
constexpr std::uint64_t kStreamSeg = 107;
constexpr std::uint64_t kStreamTiming = 108;

template <typename T>
void read_opt(const json& j, const char* key, T& out) {
  if (j.contains(key) && !j.at(key).is_null()) out = j.at(key).get<T>();
}

const json& section(const json& j, const char* key) {
  static const json empty = json::object();
  return j.contains(key) ? j.at(key) : empty;
}

double mean_pixel_std(const Dataset& ds) {
  double acc = 0.0;
  for (const auto& it : ds.items) {
    const auto v = it.pixels.values();
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - m) * (x - m);
    acc += std::sqrt(var / static_cast<double>(v.size()));
  }
  return ds.items.empty() ? 0.0 : acc / static_cast<double>(ds.items.size());
}

std::vector<Plane> pixels_of(const Dataset& ds) {
  std::vector<Plane> out;
  out.reserve(ds.size());
  for (const auto& it : ds.items) out.push_back(it.pixels);
  return out;
}

void append(Dataset& dst, const Dataset& src) {
  dst.items.insert(dst.items.end(), src.items.begin(), src.items.end());
}

template <typename F>
auto stage(const char* name, F&& f) {
  spdlog::info("stage: {}", name);
  try {
    return f();
  } catch (const std::exception& e) {
    throw std::runtime_error(std::string("stage '") + name + "' failed: " + e.what());
  }
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> f;
  std::stringstream ls(line);
  std::string cell;
  while (std::getline(ls, cell, ',')) f.push_back(cell);
  return f;
}

}  // namespace

void ExperimentConfig::validate() const {
  if (originals < 1 || test_size < 1 || ddpm_count < 1 || ddim_count < 1) {
    throw InvalidArgument("ExperimentConfig: counts must be >= 1");
  }
  if (!(augment_fraction >= 0.0 && augment_fraction < 1.0)) {
    throw InvalidArgument("ExperimentConfig: augment_fraction outside [0,1)");
  }
  if (mine_class == MineClass::None) throw InvalidArgument("ExperimentConfig: mine_class must name a mine");
  if (!(p_thresh > 0.0 && p_thresh < 1.0)) throw InvalidArgument("ExperimentConfig: p_thresh outside (0,1)");
  if (timing_runs < 1) throw InvalidArgument("ExperimentConfig: timing_runs must be >= 1");
  const auto schedule_ = make_schedule();
  SamplerConfig{SamplerKind::DDIM, ddim_steps, ddim_eta, 0, {}}.validate(schedule_);
  diffusion_train.validate();
  segmenter.validate();
  if (denoiser.height != height || denoiser.width != width || segmenter.height != height ||
      segmenter.width != width) {
    throw InvalidArgument("ExperimentConfig: network sizes must match the image size");
  }
  for (const auto& c : combinations) {
    if (std::find(kCombinationNames.begin(), kCombinationNames.end(), c) == kCombinationNames.end()) {
      throw InvalidArgument("ExperimentConfig: unknown combination '" + c + "'");
    }
  }
}

NoiseSchedule ExperimentConfig::make_schedule() const {
  return NoiseSchedule::linear(schedule.steps, schedule.beta_start, schedule.beta_end);
}

ExperimentConfig experiment_config_from_json(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    throw InvalidArgument(std::string("experiment config: ") + e.what());
  }
  ExperimentConfig c;
  read_opt(j, "seed", c.seed);
  if (j.contains("out_dir")) c.out_dir = j.at("out_dir").get<std::string>();
  if (j.contains("mine_class")) c.mine_class = parse_mine_class(j.at("mine_class").get<std::string>());
  read_opt(j, "width", c.width);
  read_opt(j, "height", c.height);
  read_opt(j, "originals", c.originals);
  read_opt(j, "augment_fraction", c.augment_fraction);
  read_opt(j, "test_size", c.test_size);

  const auto& s = section(j, "schedule");
  read_opt(s, "T", c.schedule.steps);
  read_opt(s, "beta_start", c.schedule.beta_start);
  read_opt(s, "beta_end", c.schedule.beta_end);

  const auto& d = section(j, "denoiser");
  read_opt(d, "channels", c.denoiser.channels);
  read_opt(d, "coarse_channels", c.denoiser.coarse_channels);
  read_opt(d, "coarse_dilations", c.denoiser.coarse_dilations);
  read_opt(d, "time_dim", c.denoiser.time_dim);
  c.denoiser.height = c.height;
  c.denoiser.width = c.width;

  const auto& t = section(j, "diffusion_train");
  read_opt(t, "epochs", c.diffusion_train.epochs);
  read_opt(t, "batch_size", c.diffusion_train.batch_size);
  read_opt(t, "learning_rate", c.diffusion_train.learning_rate);
  read_opt(t, "beta1", c.diffusion_train.beta1);
  read_opt(t, "beta2", c.diffusion_train.beta2);
  read_opt(t, "max_steps", c.diffusion_train.max_steps);

  const auto& g = section(j, "sampling");
  read_opt(g, "ddpm_count", c.ddpm_count);
  read_opt(g, "ddim_count", c.ddim_count);
  read_opt(g, "ddim_steps", c.ddim_steps);
  read_opt(g, "ddim_eta", c.ddim_eta);

  const auto& sg = section(j, "segmenter");
  read_opt(sg, "channels", c.segmenter.channels);
  read_opt(sg, "dilation", c.segmenter.dilation);
  read_opt(sg, "epochs", c.segmenter.epochs);
  read_opt(sg, "batch_size", c.segmenter.batch_size);
  read_opt(sg, "learning_rate", c.segmenter.learning_rate);
  read_opt(sg, "momentum", c.segmenter.momentum);
  read_opt(sg, "focal_gamma", c.segmenter.focal_gamma);
  read_opt(sg, "focal_alpha", c.segmenter.focal_alpha);
  read_opt(sg, "output_bias_init", c.segmenter.output_bias_init);
  read_opt(sg, "max_steps", c.segmenter.max_steps);
  read_opt(sg, "p_thresh", c.p_thresh);
  read_opt(sg, "min_area", c.min_area);
  c.segmenter.height = c.height;
  c.segmenter.width = c.width;

  const auto& m = section(j, "metrics");
  read_opt(m, "embedder_seed", c.embedder_seed);
  read_opt(m, "embedder_dim", c.embedder_dim);
  if (m.contains("kid_sigma") && !m.at("kid_sigma").is_null()) c.kid_sigma = m.at("kid_sigma").get<double>();
  if (m.contains("kid_form")) {
    const auto f = m.at("kid_form").get<std::string>();
    if (f == "v_statistic") c.kid_form = KidForm::VStatistic;
    else if (f == "unbiased") c.kid_form = KidForm::Unbiased;
    else throw InvalidArgument("experiment config: kid_form must be 'v_statistic' or 'unbiased'");
  }
  const auto& o = section(m, "orr");
  read_opt(o, "min_area", c.orr.min_area);
  read_opt(o, "k_highlight", c.orr.k_highlight);
  read_opt(o, "k_shadow", c.orr.k_shadow);
  read_opt(o, "shadow_reach", c.orr.shadow_reach);
  read_opt(m, "measure_inference_time", c.measure_inference_time);
  read_opt(m, "timing_runs", c.timing_runs);

  if (j.contains("combinations")) c.combinations = j.at("combinations").get<std::vector<std::string>>();
  c.validate();
  return c;
}

std::string experiment_config_to_json(const ExperimentConfig& c) {
  json j = {
      {"seed", c.seed},
      {"out_dir", c.out_dir.string()},
      {"mine_class", to_string(c.mine_class)},
      {"width", c.width},
      {"height", c.height},
      {"originals", c.originals},
      {"augment_fraction", c.augment_fraction},
      {"test_size", c.test_size},
      {"schedule", {{"T", c.schedule.steps}, {"beta_start", c.schedule.beta_start},
                    {"beta_end", c.schedule.beta_end}, {"kind", "linear"}}},
      {"denoiser", {{"channels", c.denoiser.channels},
                    {"coarse_channels", c.denoiser.coarse_channels},
                    {"coarse_dilations", c.denoiser.coarse_dilations},
                    {"time_dim", c.denoiser.time_dim}}},
      {"diffusion_train", {{"epochs", c.diffusion_train.epochs},
                           {"batch_size", c.diffusion_train.batch_size},
                           {"learning_rate", c.diffusion_train.learning_rate},
                           {"beta1", c.diffusion_train.beta1},
                           {"beta2", c.diffusion_train.beta2},
                           {"max_steps", c.diffusion_train.max_steps}}},
      {"sampling", {{"ddpm_count", c.ddpm_count}, {"ddim_count", c.ddim_count},
                    {"ddim_steps", c.ddim_steps}, {"ddim_eta", c.ddim_eta}}},
      {"segmenter", {{"channels", c.segmenter.channels}, {"dilation", c.segmenter.dilation},
                     {"epochs", c.segmenter.epochs}, {"batch_size", c.segmenter.batch_size},
                     {"learning_rate", c.segmenter.learning_rate},
                     {"momentum", c.segmenter.momentum},
                     {"focal_gamma", c.segmenter.focal_gamma},
                     {"focal_alpha", c.segmenter.focal_alpha},
                     {"output_bias_init", c.segmenter.output_bias_init},
                     {"max_steps", c.segmenter.max_steps},
                     {"p_thresh", c.p_thresh}, {"min_area", c.min_area}}},
      {"metrics", {{"embedder_seed", c.embedder_seed}, {"embedder_dim", c.embedder_dim},
                   {"kid_sigma", c.kid_sigma ? json(*c.kid_sigma) : json(nullptr)},
                   {"kid_form", c.kid_form == KidForm::VStatistic ? "v_statistic" : "unbiased"},
                   {"orr", {{"min_area", c.orr.min_area}, {"k_highlight", c.orr.k_highlight},
                            {"k_shadow", c.orr.k_shadow}, {"shadow_reach", c.orr.shadow_reach}}},
                   {"measure_inference_time", c.measure_inference_time},
                   {"timing_runs", c.timing_runs}}},
      {"combinations", c.combinations}};
  return j.dump(2) + "\n";
}

std::vector<Combination> build_combinations(const Dataset& original, const Dataset& ddpm,
                                            const Dataset& ddim) {
  if (original.items.empty() || ddpm.items.empty() || ddim.items.empty()) {
    throw InvalidArgument("build_combinations: every source must be nonempty");
  }
  auto join = [](std::initializer_list<const Dataset*> parts) {
    Dataset d;
    for (const auto* p : parts) append(d, *p);
    return d;
  };
  return {
      {kCombinationNames[0], join({&original})},
      {kCombinationNames[1], join({&ddpm})},
      {kCombinationNames[2], join({&ddim})},
      {kCombinationNames[3], join({&ddpm, &ddim})},
      {kCombinationNames[4], join({&ddpm, &original})},
      {kCombinationNames[5], join({&ddim, &original})},
      {kCombinationNames[6], join({&ddpm, &ddim, &original})},
  };
}

std::string noise_table_csv(const std::vector<NoiseRow>& rows) {
  std::ostringstream os;
  os << "model,class,avg_noise,avg_snr_db,noise_ratio_vs_ddpm\n";
  for (const auto& r : rows) {
    os << r.model << ',' << r.mine_class << ',' << format_fixed(r.avg_noise) << ','
       << format_fixed(r.avg_snr_db) << ',' << format_fixed(r.noise_ratio_vs_ddpm) << '\n';
  }
  return os.str();
}

std::vector<NoiseRow> parse_noise_table_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind("model,class,avg_noise", 0) != 0) {
    throw InvalidArgument("noise table: missing header");
  }
  std::vector<NoiseRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    const auto f = split_csv_line(line);
    if (f.size() != 5) throw InvalidArgument("noise table: expected 5 columns in '" + line + "'");
    rows.push_back({f[0], f[1], std::stod(f[2]), std::stod(f[3]), std::stod(f[4])});
  }
  return rows;
}

std::string_view to_string(Verdict v) {
  switch (v) {
    case Verdict::Pass: return "pass";
    case Verdict::Tie: return "tie";
    case Verdict::Fail: return "fail";
  }
  return "fail";
}

namespace {

Verdict verdict_of(double margin) {
  if (margin > 0.0) return Verdict::Pass;
  if (margin == 0.0) return Verdict::Tie;
  return Verdict::Fail;
}

const EvalRow& find_row(const std::vector<EvalRow>& rows, const std::string& name) {
  for (const auto& r : rows) {
    if (r.name == name) return r;
  }
  throw InvalidArgument("verify_claims: missing row '" + name + "'");
}

const NoiseRow& find_noise(const std::vector<NoiseRow>& rows, const std::string& model) {
  for (const auto& r : rows) {
    if (r.model == model) return r;
  }
  throw InvalidArgument("verify_claims: missing noise row '" + model + "'");
}

}  // namespace

std::vector<ClaimResult> verify_claims(const std::vector<EvalRow>& seg_rows,
                                       const std::vector<NoiseRow>& noise_rows) {
  std::vector<ClaimResult> out;

  const auto& original = find_row(seg_rows, "Original");
  double best = -1.0;
  for (const auto& r : seg_rows) {
    if (r.name != "Original") best = std::max(best, r.ap50_95);
  }
  if (best < 0.0) throw InvalidArgument("verify_claims: no synthetic combination rows");
  const double m1 = best - original.ap50_95;
  out.push_back({"C1", "best combination AP_50:95 exceeds Original-only AP_50:95", verdict_of(m1), m1});

  const double m2 = find_noise(noise_rows, "DDIM").avg_noise - find_noise(noise_rows, "DDPM").avg_noise;
  out.push_back({"C2", "DDIM sample noise std >= DDPM sample noise std", verdict_of(m2), m2});

  const auto& ddpm = find_row(seg_rows, "DDPM");
  double worst = 0.0;
  bool any = false;
  for (const auto& r : seg_rows) {
    if (r.name.find("DDIM") == std::string::npos) continue;
    worst = any ? std::min(worst, r.aupc) : r.aupc;
    any = true;
  }
  if (!any) throw InvalidArgument("verify_claims: no DDIM-containing rows");
  const double m3 = worst - ddpm.aupc;
  out.push_back({"C3", "every DDIM-containing combination's AUPC >= pure-DDPM AUPC", verdict_of(m3), m3});
  return out;
}

std::string claims_json(const std::vector<ClaimResult>& claims) {
  json arr = json::array();
  for (const auto& c : claims) {
    arr.push_back({{"id", c.id}, {"claim", c.claim}, {"verdict", to_string(c.verdict)},
                   {"margin", std::stod(format_fixed(c.margin))}});
  }
  return json{{"claims", arr}}.dump(2) + "\n";
}

std::vector<ClaimResult> verify_directory(const fs::path& dir) {
  const auto seg = parse_eval_table_csv(read_text_file(dir / "table3.csv"));
  const auto noise = parse_noise_table_csv(read_text_file(dir / "table2.csv"));
  auto claims = verify_claims(seg, noise);
  write_text_file(dir / "claims.json", claims_json(claims));
  return claims;
}

Dataset with_augmentations(const Dataset& originals, double augment_fraction, std::uint64_t seed) {
  Dataset out = originals;
  const auto n = originals.size();
  const auto extra = static_cast<std::size_t>(
      std::llround(static_cast<double>(n) * augment_fraction / (1.0 - augment_fraction)));
  for (std::size_t i = 0; i < extra; ++i) {
    const auto& src = originals.items[i % n];
    Rng rng(derive_seed(seed, kStreamAugment, i));
    out.items.push_back(augment(src, random_augment_ops(src, rng)));
  }
  return out;
}

Annotator highlight_annotator(const OrrThresholds& th) {
  return [th](const Plane& img) {
    auto det = detect_object(img, th);
    return det.found ? det.highlight : Mask(img.height(), img.width());
  };
}

ExperimentData synth_experiment_data(const ExperimentConfig& config) {
  ExperimentData d;
  d.originals = synth_dataset(config.originals, {config.mine_class},
                              derive_seed(config.seed, kStreamOriginals), config.width, config.height);
  d.original_train = with_augmentations(d.originals, config.augment_fraction,
                                        derive_seed(config.seed, kStreamAugment));
  d.test = synth_dataset(config.test_size, {config.mine_class}, derive_seed(config.seed, kStreamTest),
                         config.width, config.height);
  return d;
}

TrainConfig diffusion_train_config(const ExperimentConfig& config) {
  TrainConfig tc = config.diffusion_train;
  tc.seed = derive_seed(config.seed, kStreamDiffusion);
  return tc;
}

SegConfig segmenter_config(const ExperimentConfig& config) {
  SegConfig sc = config.segmenter;
  sc.seed = derive_seed(config.seed, kStreamSeg);
  return sc;
}

SamplerConfig ddpm_sampler(const ExperimentConfig& config) {
  return {SamplerKind::DDPM, config.schedule.steps, 1.0, derive_seed(config.seed, kStreamDdpm), {}};
}

SamplerConfig ddim_sampler(const ExperimentConfig& config) {
  return {SamplerKind::DDIM, config.ddim_steps, config.ddim_eta, derive_seed(config.seed, kStreamDdim), {}};
}

GenEvaluation evaluate_generated(const ExperimentConfig& config, const Dataset& originals,
                                 const Dataset& ddpm, const Dataset& ddim,
                                 const EpsPredictor* timing_model) {
  if (config.measure_inference_time && timing_model == nullptr) {
    throw InvalidArgument("evaluate_generated: inference timing needs a model");
  }
  const auto schedule = config.make_schedule();
  const FeatureEmbedder embedder(config.embedder_seed, config.embedder_dim);
  const auto real_px = pixels_of(originals);
  const Eigen::MatrixXd real_feat = embedder.embed_all(real_px);
  const auto real_stats = stats_from_features(real_feat);
  const auto cls = std::string(to_string(config.mine_class));

  GenEvaluation out;
  const std::pair<const char*, const Dataset*> sets[] = {{"DDPM", &ddpm}, {"DDIM", &ddim}};
  for (const auto& [name, ds] : sets) {
    const auto px = pixels_of(*ds);
    const Eigen::MatrixXd feat = embedder.embed_all(px);
    GenEvalRow row;
    row.model = name;
    row.mine_class = cls;
    row.fid = fid(real_stats, stats_from_features(feat));
    // The V-statistic form is only centred when both sides have the same
    // size, so KID compares the first min(n, m) rows of each.
    const Eigen::Index k = std::min(real_feat.rows(), feat.rows());
    const Eigen::MatrixXd kr = real_feat.topRows(k), kf = feat.topRows(k);
    const double sigma = config.kid_sigma.value_or(median_bandwidth(kr, kf));
    row.kid = kid(kr, kf, sigma, config.kid_form);
    const auto ns = summarize_noise(px);
    row.avg_noise = ns.avg_noise;
    row.avg_snr_db = ns.avg_snr_db;
    row.orr = orr_proxy(px, config.orr);
    if (config.measure_inference_time) {
      const auto base = std::string(name) == "DDPM" ? ddpm_sampler(config) : ddim_sampler(config);
      std::uint64_t run = 0;
      row.it_seconds = time_inference([&] {
        SamplerConfig per = base;
        per.seed = derive_seed(config.seed, kStreamTiming, run++);
        (void)sample(*timing_model, schedule, config.height, config.width, per);
      }, config.timing_runs).median_seconds;
    }
    out.gen_rows.push_back(row);
  }

  const auto orig = summarize_noise(real_px);
  const double ddpm_noise = out.gen_rows[0].avg_noise;
  auto ratio = [&](double v) { return ddpm_noise > 0.0 ? v / ddpm_noise : 0.0; };
  out.noise_rows = {
      {"Original", cls, orig.avg_noise, orig.avg_snr_db, ratio(orig.avg_noise)},
      {"DDPM", cls, out.gen_rows[0].avg_noise, out.gen_rows[0].avg_snr_db, ratio(ddpm_noise)},
      {"DDIM", cls, out.gen_rows[1].avg_noise, out.gen_rows[1].avg_snr_db,
       ratio(out.gen_rows[1].avg_noise)}};
  return out;
}

EvalRow evaluate_segmenter(const std::string& name, const SegModel& model, const Dataset& test,
                           const ExperimentConfig& config, std::vector<ImageEval>* evals) {
  const Segmenter seg(model.config);
  std::vector<ImageEval> local;
  local.reserve(test.size());
  for (const auto& item : test.items) {
    ImageEval e;
    e.preds = predict_instances(seg, model, item.pixels, config.p_thresh, config.min_area);
    if (mask_count(item.mask) > 0) e.gts.push_back(item.mask);
    local.push_back(std::move(e));
  }
  auto row = make_eval_row(name, local);
  if (evals != nullptr) *evals = std::move(local);
  return row;
}

ExperimentReport run_experiment(const ExperimentConfig& config) {
  config.validate();
  const fs::path out = config.out_dir;
  fs::create_directories(out);
  write_text_file(out / "config.json", experiment_config_to_json(config));
  const auto schedule = config.make_schedule();
  const int H = config.height, W = config.width;
  ExperimentReport report;

  const auto data = stage("synth", [&] {
    auto d = synth_experiment_data(config);
    save_dataset(d.originals, out / "data" / "original", "original");
    save_dataset(d.original_train, out / "data" / "original_train", "train");
    save_dataset(d.test, out / "data" / "test", "test");
    return d;
  });

  const Denoiser net(config.denoiser);
  const auto trained = stage("train-diffusion", [&] {
    auto r = train(net, pixels_of(data.original_train), diffusion_train_config(config), schedule);
    write_diffusion_artifacts(out / "diffusion", r, schedule);
    return r;
  });
  const DenoiserModel model(net, trained.params, schedule);
  const auto annotate = highlight_annotator(config.orr);

  const auto generated = stage("sample", [&] {
    auto a = generate_set(model, schedule, H, W, ddpm_sampler(config), config.ddpm_count,
                          config.mine_class, annotate);
    auto b = generate_set(model, schedule, H, W, ddim_sampler(config), config.ddim_count,
                          config.mine_class, annotate);
    save_dataset(a, out / "generated" / "ddpm", "ddpm");
    save_dataset(b, out / "generated" / "ddim", "ddim");
    return std::pair{std::move(a), std::move(b)};
  });
  const auto& [ddpm_set, ddim_set] = generated;
  report.ddpm_pixel_std = mean_pixel_std(ddpm_set);
  report.ddim_pixel_std = mean_pixel_std(ddim_set);

  stage("eval-gen", [&] {
    auto ge = evaluate_generated(config, data.originals, ddpm_set, ddim_set, &model);
    report.gen_rows = std::move(ge.gen_rows);
    report.noise_rows = std::move(ge.noise_rows);
    write_text_file(out / "table1.csv", gen_report_csv(report.gen_rows));
    write_text_file(out / "table1.json", gen_report_json(report.gen_rows));
    write_text_file(out / "table2.csv", noise_table_csv(report.noise_rows));
    return 0;
  });

  stage("train-seg/eval-seg", [&] {
    for (const auto& combo : build_combinations(data.original_train, ddpm_set, ddim_set)) {
      if (std::find(config.combinations.begin(), config.combinations.end(), combo.name) ==
          config.combinations.end()) {
        continue;
      }
      const auto seg = train_seg(combo.data, segmenter_config(config));
      std::vector<ImageEval> evals;
      auto row = evaluate_segmenter(combo.name, seg.model, data.test, config, &evals);
      spdlog::info("  {:<20} n={:<4} AP50={:.3f} AP50:95={:.3f} AUPC={:.3f}{}", combo.name,
                   combo.data.size(), row.ap50, row.ap50_95, row.aupc,
                   row.undefined_precision ? " (no predictions)" : "");
      write_segmenter_artifacts(out / "seg" / combo.name, combo.name, combo.data.size(), seg);
      write_text_file(out / "seg" / combo.name / "matches.jsonl", match_details_jsonl(evals));
      report.seg_rows.push_back(std::move(row));
    }
    write_text_file(out / "table3.csv", eval_table_csv(report.seg_rows));
    write_text_file(out / "precision_vs_iou.csv", precision_vs_iou_csv(report.seg_rows));
    return 0;
  });

  report.claims = stage("verify", [&] { return verify_directory(out); });
  return report;
}

void write_diffusion_artifacts(const fs::path& dir, const TrainResult& r,
                               const NoiseSchedule& schedule) {
  fs::create_directories(dir);
  save_denoiser(dir / "denoiser.bin", r.params);
  write_text_file(dir / "schedule.json", schedule.to_json() + "\n");
  json echo = {{"steps", r.steps}, {"initial_probe_loss", r.initial_probe_loss},
               {"final_probe_loss", r.final_probe_loss}, {"epoch_loss", r.epoch_loss}};
  write_text_file(dir / "train_log.json", echo.dump(2) + "\n");
}

void write_segmenter_artifacts(const fs::path& dir, const std::string& name,
                               std::size_t train_size, const SegTrainResult& r) {
  fs::create_directories(dir);
  save_segmenter(dir / "segmenter.bin", r.model);
  json echo = {{"combination", name}, {"train_size", train_size}, {"steps", r.steps},
               {"initial_probe_loss", r.initial_probe_loss},
               {"final_probe_loss", r.final_probe_loss}};
  write_text_file(dir / "train_log.json", echo.dump(2) + "\n");
}

}  // namespace sonardiff
