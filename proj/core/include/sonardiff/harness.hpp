#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "sonardiff/denoiser.hpp"
#include "sonardiff/diffusion.hpp"
#include "sonardiff/gen_metrics.hpp"
#include "sonardiff/scene.hpp"
#include "sonardiff/seg_eval.hpp"
#include "sonardiff/segmenter.hpp"

namespace sonardiff {

// The seven training-set combinations. With source sizes (a, b, c) their
// sizes are (a, b, c, b+c, a+b, a+c, a+b+c).
inline constexpr std::array<const char*, 7> kCombinationNames = {
    "Original", "DDPM", "DDIM", "DDPM+DDIM", "DDPM+Original", "DDIM+Original", "DDPM+DDIM+Original"};

struct ScheduleConfig {
  int steps = 200;
  double beta_start = 0.0005;
  double beta_end = 0.1;
};

struct ExperimentConfig {
  std::uint64_t seed = 7;
  std::filesystem::path out_dir = "experiment_out";
  MineClass mine_class = MineClass::Conical;
  int width = 32;
  int height = 32;

  int originals = 100;            // per class
  double augment_fraction = 0.5;  // share of augmented copies in the Original training set
  int test_size = 100;            // fresh held-out originals

  ScheduleConfig schedule;
  DenoiserConfig denoiser;
  TrainConfig diffusion_train;

  int ddpm_count = 200;
  int ddim_count = 200;
  int ddim_steps = 50;
  double ddim_eta = 0.0;

  SegConfig segmenter;
  double p_thresh = 0.5;
  int min_area = 3;

  std::uint64_t embedder_seed = 2024;
  int embedder_dim = 64;
  std::optional<double> kid_sigma;  // median heuristic when absent
  KidForm kid_form = KidForm::VStatistic;
  OrrThresholds orr;
  bool measure_inference_time = true;
  int timing_runs = 3;

  std::vector<std::string> combinations{kCombinationNames.begin(), kCombinationNames.end()};

  void validate() const;
  NoiseSchedule make_schedule() const;
};

ExperimentConfig experiment_config_from_json(const std::string& text);
std::string experiment_config_to_json(const ExperimentConfig& config);

struct Combination {
  std::string name;
  Dataset data;
};

// Concatenations in kCombinationNames order; no deduplication. Throws on an
// empty source.
std::vector<Combination> build_combinations(const Dataset& original, const Dataset& ddpm,
                                            const Dataset& ddim);

struct NoiseRow {
  std::string model;
  std::string mine_class;
  double avg_noise = 0.0;
  double avg_snr_db = 0.0;
  double noise_ratio_vs_ddpm = 0.0;
};

std::string noise_table_csv(const std::vector<NoiseRow>& rows);
std::vector<NoiseRow> parse_noise_table_csv(const std::string& text);

enum class Verdict { Pass, Tie, Fail };
std::string_view to_string(Verdict v);

struct ClaimResult {
  std::string id;
  std::string claim;
  Verdict verdict = Verdict::Fail;
  double margin = 0.0;
};

// C1 best combination AP_50:95 vs Original, C2 DDIM vs DDPM sample noise,
// C3 DDIM-containing combinations' AUPC vs pure DDPM. Throws when a row the
// claim needs is missing.
std::vector<ClaimResult> verify_claims(const std::vector<EvalRow>& seg_rows,
                                       const std::vector<NoiseRow>& noise_rows);
std::string claims_json(const std::vector<ClaimResult>& claims);

// Reads table2.csv and table3.csv from `dir`, writes claims.json there.
std::vector<ClaimResult> verify_directory(const std::filesystem::path& dir);

struct ExperimentReport {
  std::vector<GenEvalRow> gen_rows;
  std::vector<NoiseRow> noise_rows;
  std::vector<EvalRow> seg_rows;
  std::vector<ClaimResult> claims;
  double ddpm_pixel_std = 0.0;  // mean per-image std, [0,1] scale
  double ddim_pixel_std = 0.0;
};

// Stage helpers shared by run_experiment and the CLI subcommands.
struct ExperimentData {
  Dataset originals;       // raw originals; the FID/KID reference
  Dataset original_train;  // originals plus augmented copies; trains the generator and "Original"
  Dataset test;            // fresh held-out originals
};
ExperimentData synth_experiment_data(const ExperimentConfig& config);

TrainConfig diffusion_train_config(const ExperimentConfig& config);  // seeded
SegConfig segmenter_config(const ExperimentConfig& config);          // seeded
SamplerConfig ddpm_sampler(const ExperimentConfig& config);
SamplerConfig ddim_sampler(const ExperimentConfig& config);

struct GenEvaluation {
  std::vector<GenEvalRow> gen_rows;  // DDPM, DDIM
  std::vector<NoiseRow> noise_rows;  // Original, DDPM, DDIM
};
// `timing_model` is only used when config.measure_inference_time is set.
GenEvaluation evaluate_generated(const ExperimentConfig& config, const Dataset& originals,
                                 const Dataset& ddpm, const Dataset& ddim,
                                 const EpsPredictor* timing_model);

// Runs the segmenter over `test`; `evals` receives the per-image matches.
EvalRow evaluate_segmenter(const std::string& name, const SegModel& model, const Dataset& test,
                           const ExperimentConfig& config, std::vector<ImageEval>* evals = nullptr);

// Model file plus schedule and training-log echoes.
void write_diffusion_artifacts(const std::filesystem::path& dir, const TrainResult& result,
                               const NoiseSchedule& schedule);
void write_segmenter_artifacts(const std::filesystem::path& dir, const std::string& name,
                               std::size_t train_size, const SegTrainResult& result);

// Full pipeline; writes table1.csv, table1.json, table2.csv, table3.csv,
// precision_vs_iou.csv, claims.json and per-stage artifacts under out_dir.
// Stage failures are rethrown as std::runtime_error naming the stage.
ExperimentReport run_experiment(const ExperimentConfig& config);

// Original training set: the raw originals followed by augmented copies so
// that augmented images make up `augment_fraction` of the result.
Dataset with_augmentations(const Dataset& originals, double augment_fraction, std::uint64_t seed);

// Stand-in for manual annotation of generated images.
Annotator highlight_annotator(const OrrThresholds& th);

}  // namespace sonardiff
