#include "sonardiff/seg_eval.hpp"

#include <algorithm>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "sonardiff/components.hpp"
#include "sonardiff/error.hpp"
#include "sonardiff/gen_metrics.hpp"

namespace sonardiff {

std::vector<InstancePrediction> predict_instances(const Plane& probabilities, double p_thresh,
                                                  int min_area) {
  if (!(p_thresh > 0.0 && p_thresh < 1.0)) throw InvalidArgument("predict_instances: p_thresh outside (0,1)");
  Mask above(probabilities.height(), probabilities.width());
  for (std::size_t i = 0; i < above.size(); ++i) above[i] = probabilities[i] >= p_thresh;
  std::vector<InstancePrediction> out;
  for (const auto& comp : connected_components(above)) {
    if (static_cast<int>(comp.size()) < min_area) continue;
    double s = 0.0;
    for (auto i : comp) s += probabilities[i];
    out.push_back({component_mask(comp, probabilities.height(), probabilities.width()),
                   s / static_cast<double>(comp.size())});
  }
  std::stable_sort(out.begin(), out.end(),
                   [](const auto& a, const auto& b) { return a.score > b.score; });
  return out;
}

std::vector<InstancePrediction> predict_instances(const Segmenter& net, const SegModel& model,
                                                  const Plane& image, double p_thresh, int min_area) {
  return predict_instances(net.probabilities(model, image), p_thresh, min_area);
}

double iou(const Mask& a, const Mask& b) {
  require_same_shape(a, b, "iou");
  std::size_t inter = 0, uni = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const bool x = a[i] != 0, y = b[i] != 0;
    inter += x && y;
    uni += x || y;
  }
  if (uni == 0) throw InvalidArgument("iou: both masks are empty");
  return static_cast<double>(inter) / static_cast<double>(uni);
}

MatchCounts match_greedy(const std::vector<InstancePrediction>& preds, const std::vector<Mask>& gts,
                         double k) {
  if (!(k > 0.0 && k < 1.0)) throw InvalidArgument("match: IoU threshold outside (0,1)");
  std::vector<std::size_t> order(preds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](auto a, auto b) { return preds[a].score > preds[b].score; });
  std::vector<bool> taken(gts.size(), false);
  MatchCounts c;
  for (auto pi : order) {
    double best = -1.0;
    std::size_t best_g = gts.size();
    for (std::size_t g = 0; g < gts.size(); ++g) {
      if (taken[g]) continue;
      const double v = iou(preds[pi].mask, gts[g]);
      if (v > best) {
        best = v;
        best_g = g;
      }
    }
    if (best_g < gts.size() && best >= k) {
      taken[best_g] = true;
      ++c.true_positives;
    } else {
      ++c.false_positives;
    }
  }
  return c;
}

double ap_at(std::span<const ImageEval> images, double k) {
  long tp = 0, fp = 0;
  for (const auto& im : images) {
    const auto c = match_greedy(im.preds, im.gts, k);
    tp += c.true_positives;
    fp += c.false_positives;
  }
  if (tp + fp == 0) throw UndefinedPrecision();
  return static_cast<double>(tp) / static_cast<double>(tp + fp);
}

double ap_at(const std::vector<InstancePrediction>& preds, const std::vector<Mask>& gts, double k) {
  const ImageEval one{preds, gts};
  return ap_at(std::span<const ImageEval>(&one, 1), k);
}

std::array<double, 10> iou_thresholds() {
  std::array<double, 10> k{};
  for (int i = 0; i < 10; ++i) k[static_cast<std::size_t>(i)] = (50 + 5 * i) / 100.0;
  return k;
}

std::array<double, 10> precision_curve(std::span<const ImageEval> images) {
  std::array<double, 10> p{};
  const auto ks = iou_thresholds();
  for (std::size_t i = 0; i < ks.size(); ++i) p[i] = ap_at(images, ks[i]);
  return p;
}

ApSummary ap_range(std::span<const ImageEval> images) {
  const auto curve = precision_curve(images);
  ApSummary s;
  s.ap50 = curve[0];
  s.ap75 = curve[5];
  s.ap90 = curve[8];
  s.ap50_95 = std::accumulate(curve.begin(), curve.end(), 0.0) / 10.0;
  return s;
}

double aupc_from_curve(const std::array<double, 10>& p) {
  double area = 0.0;
  for (std::size_t i = 0; i + 1 < p.size(); ++i) area += 0.05 * 0.5 * (p[i] + p[i + 1]);
  return area;
}

double aupc(std::span<const ImageEval> images) { return aupc_from_curve(precision_curve(images)); }

EvalRow make_eval_row(const std::string& name, std::span<const ImageEval> images) {
  EvalRow r;
  r.name = name;
  try {
    r.curve = precision_curve(images);
  } catch (const UndefinedPrecision&) {
    r.undefined_precision = true;
    r.curve.fill(0.0);
  }
  r.ap50 = r.curve[0];
  r.ap75 = r.curve[5];
  r.ap90 = r.curve[8];
  r.ap50_95 = std::accumulate(r.curve.begin(), r.curve.end(), 0.0) / 10.0;
  r.avg = (r.ap50 + r.ap75 + r.ap90) / 3.0;
  r.aupc = aupc_from_curve(r.curve);
  return r;
}

EvalRow make_eval_row(const std::string& name, double ap50, double ap75, double ap90,
                      double ap50_95, double aupc_value) {
  EvalRow r;
  r.name = name;
  r.ap50 = ap50;
  r.ap75 = ap75;
  r.ap90 = ap90;
  r.ap50_95 = ap50_95;
  r.avg = (ap50 + ap75 + ap90) / 3.0;
  r.aupc = aupc_value;
  return r;
}

std::string eval_table_csv(const std::vector<EvalRow>& rows) {
  std::ostringstream os;
  os << "Training Dataset,AP_50,AP_75,AP_90,AP_50:95,Avg_50_75_90,AUPC\n";
  for (const auto& r : rows) {
    os << r.name << ',' << format_fixed(r.ap50) << ',' << format_fixed(r.ap75) << ','
       << format_fixed(r.ap90) << ',' << format_fixed(r.ap50_95) << ',' << format_fixed(r.avg)
       << ',' << format_fixed(r.aupc) << '\n';
  }
  return os.str();
}

std::vector<EvalRow> parse_eval_table_csv(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  if (!std::getline(in, line) || line.rfind("Training Dataset,", 0) != 0) {
    throw InvalidArgument("eval table: missing header");
  }
  std::vector<EvalRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> f;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) f.push_back(cell);
    if (f.size() != 7) throw InvalidArgument("eval table: expected 7 columns in '" + line + "'");
    EvalRow r;
    r.name = f[0];
    r.ap50 = std::stod(f[1]);
    r.ap75 = std::stod(f[2]);
    r.ap90 = std::stod(f[3]);
    r.ap50_95 = std::stod(f[4]);
    r.avg = std::stod(f[5]);
    r.aupc = std::stod(f[6]);
    rows.push_back(r);
  }
  return rows;
}

std::string precision_vs_iou_csv(const std::vector<EvalRow>& rows) {
  std::ostringstream os;
  os << "k";
  for (const auto& r : rows) os << ',' << r.name;
  os << '\n';
  const auto ks = iou_thresholds();
  for (std::size_t i = 0; i < ks.size(); ++i) {
    os << format_fixed(ks[i], 2);
    for (const auto& r : rows) os << ',' << format_fixed(r.curve[i]);
    os << '\n';
  }
  return os.str();
}

std::string match_details_jsonl(std::span<const ImageEval> images) {
  std::ostringstream os;
  for (std::size_t i = 0; i < images.size(); ++i) {
    const auto& im = images[i];
    nlohmann::json preds = nlohmann::json::array();
    for (const auto& p : im.preds) {
      nlohmann::json ious = nlohmann::json::array();
      for (const auto& g : im.gts) ious.push_back(iou(p.mask, g));
      preds.push_back({{"score", p.score}, {"area", mask_count(p.mask)}, {"iou", ious}});
    }
    nlohmann::json gts = nlohmann::json::array();
    for (const auto& g : im.gts) gts.push_back(mask_count(g));
    os << nlohmann::json{{"image", i}, {"predictions", preds}, {"gt_areas", gts}}.dump() << '\n';
  }
  return os.str();
}

}  // namespace sonardiff
