// sonardiff: synthetic side-scan sonar data, diffusion sampling and
// segmentation evaluation from the command line.
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <spdlog/spdlog.h>

#include "sonardiff/dataset_io.hpp"
#include "sonardiff/harness.hpp"

namespace fs = std::filesystem;
using namespace sonardiff;

namespace {

struct Common {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  bool quiet = false;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config_path, "experiment config (JSON)");
  cmd->add_option("--seed", c.seed, "override the global seed");
  cmd->add_option("--out-dir", c.out_dir, "override the output directory");
  cmd->add_flag("-q,--quiet", c.quiet, "only log warnings");
}

ExperimentConfig load_config(const Common& c) {
  ExperimentConfig cfg =
      c.config_path.empty() ? ExperimentConfig{} : experiment_config_from_json(read_text_file(c.config_path));
  if (c.seed) cfg.seed = *c.seed;
  if (c.out_dir) cfg.out_dir = *c.out_dir;
  if (c.quiet) spdlog::set_level(spdlog::level::warn);
  cfg.validate();
  return cfg;
}

Dataset load_many(const std::vector<std::string>& manifests) {
  Dataset out;
  for (const auto& m : manifests) {
    auto ds = load_dataset(m);
    out.items.insert(out.items.end(), ds.items.begin(), ds.items.end());
  }
  return out;
}

void print_claims(const std::vector<ClaimResult>& claims) {
  for (const auto& c : claims) {
    std::cout << c.id << ' ' << to_string(c.verdict) << " margin=" << format_fixed(c.margin) << "  "
              << c.claim << '\n';
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"sonardiff: sonar diffusion augmentation experiments"};
  app.require_subcommand(1);
  Common common;

  auto* synth = app.add_subcommand("synth", "synthesize originals, the augmented training set and the test set");
  add_common(synth, common);

  auto* train_diff = app.add_subcommand("train-diffusion", "train the noise-prediction network");
  add_common(train_diff, common);
  std::string train_data;
  train_diff->add_option("--data", train_data, "training manifest (default <out>/data/original_train/manifest.json)");

  auto* sample_cmd = app.add_subcommand("sample", "generate images with a trained network");
  add_common(sample_cmd, common);
  std::string model_path, sampler_name = "ddim", trajectory_dir;
  std::optional<int> count;
  sample_cmd->add_option("--model", model_path, "denoiser file (default <out>/diffusion/denoiser.bin)");
  sample_cmd->add_option("--sampler", sampler_name, "ddpm or ddim")->check(CLI::IsMember({"ddpm", "ddim"}));
  sample_cmd->add_option("--count", count, "number of images");
  sample_cmd->add_option("--trajectory", trajectory_dir, "also dump every x_t of one extra sample here");

  auto* eval_gen = app.add_subcommand("eval-gen", "FID, KID, noise, SNR and ORR of generated sets");
  add_common(eval_gen, common);
  std::string real_manifest, ddpm_manifest, ddim_manifest;
  eval_gen->add_option("--real", real_manifest, "reference manifest");
  eval_gen->add_option("--ddpm", ddpm_manifest, "DDPM manifest");
  eval_gen->add_option("--ddim", ddim_manifest, "DDIM manifest");

  auto* train_seg_cmd = app.add_subcommand("train-seg", "train a segmenter on one or more manifests");
  add_common(train_seg_cmd, common);
  std::vector<std::string> seg_data;
  std::string seg_name;
  train_seg_cmd->add_option("--data", seg_data, "training manifests, concatenated in order")->required();
  train_seg_cmd->add_option("--name", seg_name, "run name (output under <out>/seg/<name>)")->required();

  auto* eval_seg = app.add_subcommand("eval-seg", "evaluate segmenters on a test set");
  add_common(eval_seg, common);
  std::vector<std::string> seg_models;
  std::string test_manifest;
  eval_seg->add_option("--model", seg_models, "NAME=PATH, repeatable")->required();
  eval_seg->add_option("--test", test_manifest, "test manifest (default <out>/data/test/manifest.json)");

  auto* experiment = app.add_subcommand("experiment", "run the full pipeline");
  add_common(experiment, common);

  auto* verify = app.add_subcommand("verify", "recompute claims.json from table2.csv and table3.csv");
  std::string verify_dir;
  verify->add_option("dir", verify_dir, "experiment output directory")->required();

  auto* defaults = app.add_subcommand("default-config", "print the default config");

  CLI11_PARSE(app, argc, argv);

  try {
    if (defaults->parsed()) {
      std::cout << experiment_config_to_json(ExperimentConfig{});
      return 0;
    }
    if (verify->parsed()) {
      print_claims(verify_directory(verify_dir));
      return 0;
    }

    const auto cfg = load_config(common);
    const fs::path out = cfg.out_dir;
    const auto schedule = cfg.make_schedule();

    if (synth->parsed()) {
      const auto d = synth_experiment_data(cfg);
      save_dataset(d.originals, out / "data" / "original", "original");
      save_dataset(d.original_train, out / "data" / "original_train", "train");
      save_dataset(d.test, out / "data" / "test", "test");
      std::cout << "wrote " << d.originals.size() << " originals, " << d.original_train.size()
                << " training images, " << d.test.size() << " test images under " << out / "data" << '\n';
    } else if (train_diff->parsed()) {
      const auto manifest = train_data.empty() ? out / "data" / "original_train" / "manifest.json" : fs::path(train_data);
      const auto ds = load_dataset(manifest);
      std::vector<Plane> images;
      for (const auto& it : ds.items) images.push_back(it.pixels);
      const Denoiser net(cfg.denoiser);
      const auto r = train(net, images, diffusion_train_config(cfg), schedule);
      write_diffusion_artifacts(out / "diffusion", r, schedule);
      std::cout << "probe loss " << r.initial_probe_loss << " -> " << r.final_probe_loss << " after "
                << r.steps << " steps\n";
    } else if (sample_cmd->parsed()) {
      const auto params = load_denoiser(model_path.empty() ? out / "diffusion" / "denoiser.bin" : fs::path(model_path));
      const Denoiser net(params.config);
      const DenoiserModel model(net, params, schedule);
      const bool ddpm = sampler_name == "ddpm";
      const auto sc = ddpm ? ddpm_sampler(cfg) : ddim_sampler(cfg);
      const int n = count.value_or(ddpm ? cfg.ddpm_count : cfg.ddim_count);
      const auto ds = generate_set(model, schedule, cfg.height, cfg.width, sc, n, cfg.mine_class,
                                   highlight_annotator(cfg.orr));
      save_dataset(ds, out / "generated" / sampler_name, sampler_name);
      if (!trajectory_dir.empty()) {
        Trajectory traj;
        (void)sample(model, schedule, cfg.height, cfg.width, sc, &traj);
        write_trajectory(trajectory_dir, traj);
      }
      std::cout << "wrote " << n << ' ' << sampler_name << " samples under " << out / "generated" / sampler_name << '\n';
    } else if (eval_gen->parsed()) {
      auto pick = [&](const std::string& given, const fs::path& fallback) {
        return load_dataset(given.empty() ? fallback : fs::path(given));
      };
      const auto real = pick(real_manifest, out / "data" / "original" / "manifest.json");
      const auto a = pick(ddpm_manifest, out / "generated" / "ddpm" / "manifest.json");
      const auto b = pick(ddim_manifest, out / "generated" / "ddim" / "manifest.json");
      ExperimentConfig ec = cfg;
      ec.measure_inference_time = false;
      const auto ge = evaluate_generated(ec, real, a, b, nullptr);
      fs::create_directories(out);
      write_text_file(out / "table1.csv", gen_report_csv(ge.gen_rows));
      write_text_file(out / "table1.json", gen_report_json(ge.gen_rows));
      write_text_file(out / "table2.csv", noise_table_csv(ge.noise_rows));
      std::cout << gen_report_csv(ge.gen_rows) << noise_table_csv(ge.noise_rows);
    } else if (train_seg_cmd->parsed()) {
      const auto ds = load_many(seg_data);
      const auto r = train_seg(ds, segmenter_config(cfg));
      write_segmenter_artifacts(out / "seg" / seg_name, seg_name, ds.size(), r);
      std::cout << "probe loss " << r.initial_probe_loss << " -> " << r.final_probe_loss << '\n';
    } else if (eval_seg->parsed()) {
      const auto test = load_dataset(test_manifest.empty() ? out / "data" / "test" / "manifest.json"
                                                           : fs::path(test_manifest));
      std::vector<EvalRow> rows;
      for (const auto& spec : seg_models) {
        const auto eq = spec.find('=');
        if (eq == std::string::npos) throw InvalidArgument("--model expects NAME=PATH, got '" + spec + "'");
        const auto model = load_segmenter(spec.substr(eq + 1));
        rows.push_back(evaluate_segmenter(spec.substr(0, eq), model, test, cfg));
      }
      fs::create_directories(out);
      write_text_file(out / "table3.csv", eval_table_csv(rows));
      write_text_file(out / "precision_vs_iou.csv", precision_vs_iou_csv(rows));
      std::cout << eval_table_csv(rows);
    } else if (experiment->parsed()) {
      const auto report = run_experiment(cfg);
      std::cout << "mean pixel std: DDPM " << format_fixed(report.ddpm_pixel_std) << ", DDIM "
                << format_fixed(report.ddim_pixel_std) << '\n';
      print_claims(report.claims);
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
