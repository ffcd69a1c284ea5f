#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sonardiff/plane.hpp"

namespace sonardiff {

// Fixed random filter bank followed by rectification and spatial average
// pooling. Stands in for a pretrained feature network: same seed, same
// embedding function.
class FeatureEmbedder {
 public:
  explicit FeatureEmbedder(std::uint64_t seed = 2024, int dim = 64, int kernel = 5);

  int dim() const noexcept { return dim_; }
  std::uint64_t seed() const noexcept { return seed_; }
  Eigen::VectorXd embed(const Plane& image) const;
  Eigen::MatrixXd embed_all(const std::vector<Plane>& images) const;  // one row per image

 private:
  std::uint64_t seed_;
  int dim_;
  int kernel_;
  int filters_;
  std::vector<double> weights_;     // filters_ x kernel_ x kernel_
  std::vector<double> thresholds_;  // dim_
};

struct FeatureStats {
  Eigen::VectorXd mean;
  Eigen::MatrixXd cov;  // unbiased (n - 1)
  std::size_t count = 0;
};

FeatureStats stats_from_features(const Eigen::MatrixXd& features);
FeatureStats embed_stats(const std::vector<Plane>& images, const FeatureEmbedder& embedder);

// Principal square root of a symmetric PSD matrix via eigendecomposition;
// eigenvalues below zero are clamped to zero. Throws on asymmetry beyond
// 1e-8 relative to the largest entry.
Eigen::MatrixXd sqrtm_psd(const Eigen::MatrixXd& a);

// ||mu_r - mu_f||^2 + Tr(S_r + S_f - 2 (S_r S_f)^{1/2}). The cross term is
// evaluated as Tr sqrt(sqrt(S_r) S_f sqrt(S_r)), which has the same trace.
double fid(const FeatureStats& real, const FeatureStats& fake);

double rbf_kernel(std::span<const double> x, std::span<const double> y, double sigma);

enum class KidForm {
  VStatistic,  // V-statistic, diagonal terms included, cross term 2/n^2
  Unbiased,  // diagonals excluded, cross term 2/(nm)
};

// Rows are feature vectors.
double kid(const Eigen::MatrixXd& real, const Eigen::MatrixXd& fake, double sigma,
           KidForm form = KidForm::VStatistic);

// Median pairwise Euclidean distance over the pooled rows.
double median_bandwidth(const Eigen::MatrixXd& real, const Eigen::MatrixXd& fake);

struct SnrResult {
  double avg_noise = 0.0;  // pixel standard deviation
  double snr_db = 0.0;
};

// 10 log10(mean / std) over raw values (population std).
SnrResult snr_of_values(std::span<const double> values);
// Same on the 8-bit representation of a [0,1] image.
SnrResult snr(const Plane& image);

struct OrrThresholds {
  int min_area = 4;
  double k_highlight = 2.0;
  double k_shadow = 1.0;
  int shadow_reach = 4;  // pixels swept from the highlight when looking for shadow
};

struct ObjectDetection {
  bool found = false;
  Mask highlight;  // the accepted bright component (empty when !found)
  double background_mean = 0.0;
  double background_std = 0.0;
};

// Background level from median / MAD; bright 4-connected components above
// mean + k_h std with area >= min_area; a component counts if, swept in some
// direction, its neighbourhood averages below mean - k_s std.
ObjectDetection detect_object(const Plane& image, const OrrThresholds& th = {});
double orr_proxy(const std::vector<Plane>& images, const OrrThresholds& th = {});

struct InferenceTiming {
  double median_seconds = 0.0;
  std::vector<double> samples;
};

// One untimed warm-up call, then `runs` timed calls; `run` produces one image.
InferenceTiming time_inference(const std::function<void()>& run, int runs);

struct GenEvalRow {
  std::string model;
  std::string mine_class;
  double fid = 0.0;
  double kid = 0.0;
  double avg_noise = 0.0;
  double avg_snr_db = 0.0;
  double orr = 0.0;
  std::optional<double> it_seconds;
};

std::string format_fixed(double v, int precision = 6);
std::string gen_report_csv(const std::vector<GenEvalRow>& rows);
std::string gen_report_json(const std::vector<GenEvalRow>& rows);

struct NoiseSummary {
  double avg_noise = 0.0;
  double avg_snr_db = 0.0;
};
NoiseSummary summarize_noise(const std::vector<Plane>& images);

}  // namespace sonardiff
