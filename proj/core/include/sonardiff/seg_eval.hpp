#pragma once

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "sonardiff/plane.hpp"
#include "sonardiff/segmenter.hpp"

namespace sonardiff {

struct InstancePrediction {
  Mask mask;           // one 4-connected component
  double score = 0.0;  // mean probability over the component
};

// Threshold at p_thresh, keep 4-connected components with at least
// min_area pixels, score each by its mean probability, sort by score
// (descending; ties keep scan order).
std::vector<InstancePrediction> predict_instances(const Plane& probabilities, double p_thresh,
                                                  int min_area = 3);
std::vector<InstancePrediction> predict_instances(const Segmenter& net, const SegModel& model,
                                                  const Plane& image, double p_thresh,
                                                  int min_area = 3);

// |a & b| / |a | b|. Throws InvalidArgument when both masks are empty.
double iou(const Mask& a, const Mask& b);

struct MatchCounts {
  int true_positives = 0;
  int false_positives = 0;
};

// Greedy in score order: each prediction takes the unmatched ground truth of
// highest IoU; it is a TP when that IoU >= k, otherwise an FP.
MatchCounts match_greedy(const std::vector<InstancePrediction>& preds, const std::vector<Mask>& gts,
                         double k);

// One test image: predictions and its ground-truth instances.
struct ImageEval {
  std::vector<InstancePrediction> preds;
  std::vector<Mask> gts;
};

// TP / (TP + FP) with counts pooled over all images. Throws
// UndefinedPrecision when there are no predictions at all.
double ap_at(std::span<const ImageEval> images, double k);
double ap_at(const std::vector<InstancePrediction>& preds, const std::vector<Mask>& gts, double k);

// k = 0.50, 0.55, ..., 0.95
std::array<double, 10> iou_thresholds();

struct ApSummary {
  double ap50 = 0.0;
  double ap75 = 0.0;
  double ap90 = 0.0;
  double ap50_95 = 0.0;  // mean over the 10 thresholds
};

ApSummary ap_range(std::span<const ImageEval> images);

// Trapezoid over the 10 thresholds, step 0.05, not normalized (max 0.45).
double aupc_from_curve(const std::array<double, 10>& precision);
double aupc(std::span<const ImageEval> images);

std::array<double, 10> precision_curve(std::span<const ImageEval> images);

// One row of the combination table.
struct EvalRow {
  std::string name;
  double ap50 = 0.0;
  double ap75 = 0.0;
  double ap90 = 0.0;
  double ap50_95 = 0.0;
  double avg = 0.0;  // mean(ap50, ap75, ap90)
  double aupc = 0.0;
  bool undefined_precision = false;  // no predictions: values recorded as 0
  std::array<double, 10> curve{};
};

EvalRow make_eval_row(const std::string& name, std::span<const ImageEval> images);
EvalRow make_eval_row(const std::string& name, double ap50, double ap75, double ap90,
                      double ap50_95, double aupc);

std::string eval_table_csv(const std::vector<EvalRow>& rows);
std::vector<EvalRow> parse_eval_table_csv(const std::string& text);
std::string precision_vs_iou_csv(const std::vector<EvalRow>& rows);

// Per-image match details as JSON lines (debugging aid).
std::string match_details_jsonl(std::span<const ImageEval> images);

}  // namespace sonardiff
