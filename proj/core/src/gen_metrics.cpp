#include "sonardiff/gen_metrics.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

#include "sonardiff/components.hpp"
#include "sonardiff/error.hpp"
#include "sonardiff/random.hpp"

namespace sonardiff {

FeatureEmbedder::FeatureEmbedder(std::uint64_t seed, int dim, int kernel)
    : seed_(seed), dim_(dim), kernel_(kernel), filters_(std::max(1, dim / 2)) {
  if (dim < 1 || kernel < 1) throw InvalidArgument("FeatureEmbedder: bad dimensions");
  Rng rng(derive_seed(seed, 41));
  const auto taps = static_cast<std::size_t>(kernel * kernel);
  weights_.resize(static_cast<std::size_t>(filters_) * taps);
  for (int f = 0; f < filters_; ++f) {
    double* w = weights_.data() + static_cast<std::size_t>(f) * taps;
    double mean = 0.0;
    for (std::size_t i = 0; i < taps; ++i) mean += (w[i] = rng.normal());
    mean /= static_cast<double>(taps);
    double norm = 0.0;
    for (std::size_t i = 0; i < taps; ++i) {
      w[i] -= mean;
      norm += w[i] * w[i];
    }
    norm = std::sqrt(norm);
    for (std::size_t i = 0; i < taps; ++i) w[i] /= norm;
  }
  thresholds_.resize(static_cast<std::size_t>(dim));
  for (auto& t : thresholds_) t = rng.uniform(0.0, 0.2);
}

Eigen::VectorXd FeatureEmbedder::embed(const Plane& image) const {
  const int H = image.height() - kernel_ + 1, W = image.width() - kernel_ + 1;
  if (H < 1 || W < 1) throw InvalidArgument("FeatureEmbedder: image smaller than the filters");
  const auto taps = static_cast<std::size_t>(kernel_ * kernel_);
  Eigen::VectorXd feat = Eigen::VectorXd::Zero(dim_);
  std::vector<double> resp(static_cast<std::size_t>(H) * static_cast<std::size_t>(W));
  for (int f = 0; f < filters_; ++f) {
    const double* w = weights_.data() + static_cast<std::size_t>(f) * taps;
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        double s = 0.0;
        for (int ky = 0; ky < kernel_; ++ky) {
          for (int kx = 0; kx < kernel_; ++kx) s += w[ky * kernel_ + kx] * image(y + ky, x + kx);
        }
        resp[static_cast<std::size_t>(y * W + x)] = s;
      }
    }
    // Feature 2f rectifies the positive response, 2f+1 the negative one.
    for (int sign = 0; sign < 2; ++sign) {
      const int k = 2 * f + sign;
      if (k >= dim_) break;
      const double th = thresholds_[static_cast<std::size_t>(k)];
      double acc = 0.0;
      for (double r : resp) acc += std::max(0.0, (sign == 0 ? r : -r) - th);
      feat(k) = acc / static_cast<double>(resp.size());
    }
  }
  return feat;
}

Eigen::MatrixXd FeatureEmbedder::embed_all(const std::vector<Plane>& images) const {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(images.size()), dim_);
  for (std::size_t i = 0; i < images.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = embed(images[i]).transpose();
  return out;
}

FeatureStats stats_from_features(const Eigen::MatrixXd& features) {
  if (features.rows() < 2) throw InvalidArgument("embed_stats: need at least 2 samples");
  FeatureStats s;
  s.count = static_cast<std::size_t>(features.rows());
  s.mean = features.colwise().mean().transpose();
  const Eigen::MatrixXd centered = features.rowwise() - s.mean.transpose();
  s.cov = (centered.transpose() * centered) / static_cast<double>(features.rows() - 1);
  s.cov = 0.5 * (s.cov + s.cov.transpose());
  return s;
}

FeatureStats embed_stats(const std::vector<Plane>& images, const FeatureEmbedder& embedder) {
  if (images.size() < 2) throw InvalidArgument("embed_stats: need at least 2 images");
  return stats_from_features(embedder.embed_all(images));
}

Eigen::MatrixXd sqrtm_psd(const Eigen::MatrixXd& a) {
  if (a.rows() != a.cols()) throw InvalidArgument("sqrtm_psd: matrix is not square");
  if (a.size() == 0) return a;
  const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
  if ((a - a.transpose()).cwiseAbs().maxCoeff() > 1e-8 * scale) {
    throw InvalidArgument("sqrtm_psd: matrix is not symmetric");
  }
  const Eigen::MatrixXd sym = 0.5 * (a + a.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sym);
  if (es.info() != Eigen::Success) throw std::runtime_error("sqrtm_psd: eigendecomposition failed");
  const Eigen::VectorXd roots = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return es.eigenvectors() * roots.asDiagonal() * es.eigenvectors().transpose();
}

double fid(const FeatureStats& real, const FeatureStats& fake) {
  if (real.mean.size() != fake.mean.size() || real.cov.rows() != fake.cov.rows()) {
    throw InvalidArgument("fid: feature dimension mismatch");
  }
  const double mean_term = (real.mean - fake.mean).squaredNorm();
  const Eigen::MatrixXd root = sqrtm_psd(real.cov);
  Eigen::MatrixXd inner = root * fake.cov * root;
  inner = 0.5 * (inner + inner.transpose());
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(inner, Eigen::EigenvaluesOnly);
  const double cross = es.eigenvalues().cwiseMax(0.0).cwiseSqrt().sum();
  double value = mean_term + real.cov.trace() + fake.cov.trace() - 2.0 * cross;
  if (value < 0.0 && value >= -1e-6) value = 0.0;
  return value;
}

double rbf_kernel(std::span<const double> x, std::span<const double> y, double sigma) {
  if (!(sigma > 0.0)) throw InvalidArgument("rbf_kernel: sigma must be > 0");
  if (x.size() != y.size()) throw InvalidArgument("rbf_kernel: dimension mismatch");
  double d2 = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double d = x[i] - y[i];
    d2 += d * d;
  }
  return std::exp(-d2 / (2.0 * sigma * sigma));
}

namespace {

// Sum of k over all (i, j) pairs; diagonal excluded on request (a == b).
double kernel_sum(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, double sigma, bool skip_diagonal) {
  const Eigen::MatrixXd at = a.transpose(), bt = b.transpose();
  const auto dim = static_cast<std::size_t>(a.cols());
  double sum = 0.0;
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    std::span<const double> xi(at.col(i).data(), dim);
    for (Eigen::Index j = 0; j < b.rows(); ++j) {
      if (skip_diagonal && i == j) continue;
      sum += rbf_kernel(xi, std::span<const double>(bt.col(j).data(), dim), sigma);
    }
  }
  return sum;
}

}  // namespace

double kid(const Eigen::MatrixXd& real, const Eigen::MatrixXd& fake, double sigma, KidForm form) {
  const double n = static_cast<double>(real.rows());
  const double m = static_cast<double>(fake.rows());
  if (real.rows() < 1 || fake.rows() < 1) throw InvalidArgument("kid: empty feature set");
  if (real.cols() != fake.cols()) throw InvalidArgument("kid: dimension mismatch");
  if (form == KidForm::VStatistic) {
    return kernel_sum(real, real, sigma, false) / (n * n) -
           2.0 * kernel_sum(real, fake, sigma, false) / (n * n) +
           kernel_sum(fake, fake, sigma, false) / (m * m);
  }
  if (real.rows() < 2 || fake.rows() < 2) throw InvalidArgument("kid: unbiased form needs >= 2 samples per set");
  return kernel_sum(real, real, sigma, true) / (n * (n - 1.0)) -
         2.0 * kernel_sum(real, fake, sigma, false) / (n * m) +
         kernel_sum(fake, fake, sigma, true) / (m * (m - 1.0));
}

double median_bandwidth(const Eigen::MatrixXd& real, const Eigen::MatrixXd& fake) {
  Eigen::MatrixXd pooled(real.rows() + fake.rows(), real.cols());
  pooled << real, fake;
  std::vector<double> d;
  for (Eigen::Index i = 0; i < pooled.rows(); ++i) {
    for (Eigen::Index j = i + 1; j < pooled.rows(); ++j) d.push_back((pooled.row(i) - pooled.row(j)).norm());
  }
  if (d.empty()) throw InvalidArgument("median_bandwidth: need at least 2 samples");
  std::sort(d.begin(), d.end());
  const double med = d.size() % 2 ? d[d.size() / 2] : 0.5 * (d[d.size() / 2 - 1] + d[d.size() / 2]);
  if (!(med > 0.0)) throw InvalidArgument("median_bandwidth: all samples coincide");
  return med;
}

SnrResult snr_of_values(std::span<const double> values) {
  if (values.empty()) throw InvalidArgument("snr: empty image");
  const double n = static_cast<double>(values.size());
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / n;
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  const double sd = std::sqrt(var / n);
  if (sd == 0.0) throw InfiniteSnr();
  if (!(mean > 0.0)) throw InvalidArgument("snr: mean signal must be > 0");
  return {sd, 10.0 * std::log10(mean / sd)};
}

SnrResult snr(const Plane& image) {
  std::vector<double> v(image.values().begin(), image.values().end());
  for (auto& x : v) x *= 255.0;
  return snr_of_values(v);
}

NoiseSummary summarize_noise(const std::vector<Plane>& images) {
  NoiseSummary s;
  std::size_t n = 0;
  for (const auto& img : images) {
    try {
      const auto r = snr(img);
      s.avg_noise += r.avg_noise;
      s.avg_snr_db += r.snr_db;
      ++n;
    } catch (const InfiniteSnr&) {
    } catch (const InvalidArgument&) {
    }
  }
  if (n > 0) {
    s.avg_noise /= static_cast<double>(n);
    s.avg_snr_db /= static_cast<double>(n);
  }
  return s;
}

ObjectDetection detect_object(const Plane& image, const OrrThresholds& th) {
  ObjectDetection det;
  const int H = image.height(), W = image.width();
  std::vector<double> v(image.values().begin(), image.values().end());
  if (v.empty()) return det;
  auto median_of = [](std::vector<double> x) {
    std::sort(x.begin(), x.end());
    return x.size() % 2 ? x[x.size() / 2] : 0.5 * (x[x.size() / 2 - 1] + x[x.size() / 2]);
  };
  const double med = median_of(v);
  std::vector<double> dev(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) dev[i] = std::abs(v[i] - med);
  const double sd = std::max(1.4826 * median_of(dev), 1e-6);
  det.background_mean = med;
  det.background_std = sd;

  Mask bright(H, W);
  for (std::size_t i = 0; i < v.size(); ++i) bright[i] = v[i] >= med + th.k_highlight * sd;
  auto comps = connected_components(bright);
  std::stable_sort(comps.begin(), comps.end(),
                   [](const auto& a, const auto& b) { return a.size() > b.size(); });

  static constexpr int kDirs[8][2] = {{1, 0}, {-1, 0}, {0, 1}, {0, -1}, {1, 1}, {1, -1}, {-1, 1}, {-1, -1}};
  for (const auto& comp : comps) {
    if (static_cast<int>(comp.size()) < th.min_area) break;
    const Mask cm = component_mask(comp, H, W);
    for (const auto& d : kDirs) {
      double sum = 0.0;
      int count = 0;
      for (int y = 0; y < H; ++y) {
        for (int x = 0; x < W; ++x) {
          if (cm(y, x) || bright(y, x)) continue;
          for (int s = 1; s <= th.shadow_reach; ++s) {
            const int sy = y - s * d[1], sx = x - s * d[0];
            if (sy >= 0 && sy < H && sx >= 0 && sx < W && cm(sy, sx)) {
              sum += image(y, x);
              ++count;
              break;
            }
          }
        }
      }
      if (count > 0 && sum / count <= med - th.k_shadow * sd) {
        det.found = true;
        det.highlight = cm;
        return det;
      }
    }
  }
  return det;
}

double orr_proxy(const std::vector<Plane>& images, const OrrThresholds& th) {
  if (images.empty()) throw InvalidArgument("orr_proxy: empty image list");
  std::size_t hits = 0;
  for (const auto& img : images) hits += detect_object(img, th).found;
  return static_cast<double>(hits) / static_cast<double>(images.size());
}

InferenceTiming time_inference(const std::function<void()>& run, int runs) {
  if (runs < 1) throw InvalidArgument("time_inference: runs must be >= 1");
  run();
  InferenceTiming t;
  for (int i = 0; i < runs; ++i) {
    const auto start = std::chrono::steady_clock::now();
    run();
    t.samples.push_back(std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count());
  }
  auto sorted = t.samples;
  std::sort(sorted.begin(), sorted.end());
  t.median_seconds = sorted.size() % 2 ? sorted[sorted.size() / 2]
                                       : 0.5 * (sorted[sorted.size() / 2 - 1] + sorted[sorted.size() / 2]);
  return t;
}

std::string format_fixed(double v, int precision) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", precision, v);
  std::string s(buf);
  if (s == "-0" || s.find_first_not_of("-0.") == std::string::npos) {
    if (!s.empty() && s[0] == '-') s.erase(0, 1);  // no "-0.000000"
  }
  return s;
}

std::string gen_report_csv(const std::vector<GenEvalRow>& rows) {
  std::ostringstream os;
  os << "model,class,fid,kid,avg_noise,avg_snr_db,orr,it_seconds\n";
  for (const auto& r : rows) {
    os << r.model << ',' << r.mine_class << ',' << format_fixed(r.fid) << ',' << format_fixed(r.kid)
       << ',' << format_fixed(r.avg_noise) << ',' << format_fixed(r.avg_snr_db) << ','
       << format_fixed(r.orr) << ',' << (r.it_seconds ? format_fixed(*r.it_seconds) : "") << '\n';
  }
  return os.str();
}

std::string gen_report_json(const std::vector<GenEvalRow>& rows) {
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& r : rows) {
    nlohmann::json j = {{"model", r.model}, {"class", r.mine_class}, {"fid", r.fid}, {"kid", r.kid},
                        {"avg_noise", r.avg_noise}, {"avg_snr_db", r.avg_snr_db}, {"orr", r.orr}};
    j["it_seconds"] = r.it_seconds ? nlohmann::json(*r.it_seconds) : nlohmann::json(nullptr);
    arr.push_back(j);
  }
  return arr.dump(2) + "\n";
}

}  // namespace sonardiff
