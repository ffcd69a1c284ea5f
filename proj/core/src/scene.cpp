#include "sonardiff/scene.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>
#include <tuple>

namespace sonardiff {
namespace {

constexpr double kShadowAttenuation = 0.6;
constexpr double kShadowNoiseScale = 0.5;
constexpr double kShadowSpread = 0.3;  // relative widening at the far end
constexpr double kShadowStep = 0.25;

constexpr std::uint64_t kStreamField = 1;
constexpr std::uint64_t kStreamSpeckle = 2;

double taper_strength(MineClass c) {
  switch (c) {
    case MineClass::Conical: return 0.4;
    case MineClass::Cylindrical: return 0.15;
    case MineClass::None: break;
  }
  return 0.0;
}

// Squared normalized radius of (x,y) in the footprint ellipse.
double ellipse_r2(const SceneSpec& s, double x, double y) {
  const double dx = x - s.mine_center.x;
  const double dy = y - s.mine_center.y;
  const double c = std::cos(s.orientation), sn = std::sin(s.orientation);
  const double u = (dx * c + dy * sn) / s.semi_major;
  const double v = (-dx * sn + dy * c) / s.semi_minor;
  return u * u + v * v;
}

Vec2 half_extent(const SceneSpec& s) {
  const double c = std::cos(s.orientation), sn = std::sin(s.orientation);
  const double a2 = s.semi_major * s.semi_major, b2 = s.semi_minor * s.semi_minor;
  return {std::sqrt(a2 * c * c + b2 * sn * sn), std::sqrt(a2 * sn * sn + b2 * c * c)};
}

}  // namespace

std::string_view to_string(MineClass c) {
  switch (c) {
    case MineClass::None: return "none";
    case MineClass::Conical: return "conical";
    case MineClass::Cylindrical: return "cylindrical";
  }
  return "none";
}

std::string_view to_string(Provenance p) {
  switch (p) {
    case Provenance::Original: return "original";
    case Provenance::DDPM: return "ddpm";
    case Provenance::DDIM: return "ddim";
  }
  return "original";
}

MineClass parse_mine_class(std::string_view s) {
  if (s == "none") return MineClass::None;
  if (s == "conical") return MineClass::Conical;
  if (s == "cylindrical") return MineClass::Cylindrical;
  throw InvalidArgument("unknown mine class '" + std::string(s) + "'");
}

Provenance parse_provenance(std::string_view s) {
  if (s == "original") return Provenance::Original;
  if (s == "ddpm") return Provenance::DDPM;
  if (s == "ddim") return Provenance::DDIM;
  throw InvalidArgument("unknown provenance '" + std::string(s) + "'");
}

void SceneSpec::validate() const {
  if (width < 1 || height < 1) throw InvalidArgument("SceneSpec: empty image");
  if (!(speckle_std > 0.0)) throw InvalidArgument("SceneSpec: speckle_std must be > 0");
  if (speckle_mean < 0.0 || speckle_mean > 1.0) {
    throw InvalidArgument("SceneSpec: speckle_mean outside [0,1]");
  }
  if (shadow_len < 0.0) throw InvalidArgument("SceneSpec: shadow_len must be >= 0");
  if (mine_class == MineClass::None) return;
  if (!(highlight_gain > 0.0 && highlight_gain <= 1.0)) {
    throw InvalidArgument("SceneSpec: highlight_gain outside (0,1]");
  }
  if (!(semi_major > 0.0 && semi_minor > 0.0)) {
    throw InvalidArgument("SceneSpec: mine extent must be positive");
  }
  const double norm = std::hypot(insonify_dir.x, insonify_dir.y);
  if (std::abs(norm - 1.0) > 1e-9) throw InvalidArgument("SceneSpec: insonify_dir is not unit length");
  const Vec2 h = half_extent(*this);
  if (mine_center.x - h.x < 0.0 || mine_center.x + h.x > width - 1 ||
      mine_center.y - h.y < 0.0 || mine_center.y + h.y > height - 1) {
    std::ostringstream os;
    os << "SceneSpec: mine footprint out of bounds (center " << mine_center.x << ","
       << mine_center.y << ", half extent " << h.x << "x" << h.y << ", image " << width
       << "x" << height << ")";
    throw InvalidArgument(os.str());
  }
}

SceneLayers render_layers(const SceneSpec& spec) {
  spec.validate();
  const int H = spec.height, W = spec.width;
  SceneLayers out{Plane(H, W), Plane(H, W), Mask(H, W), Mask(H, W)};

  // Seabed: a few long-wavelength cosines, peak amplitude <= background_amplitude.
  Rng field_rng(derive_seed(spec.seed, kStreamField));
  constexpr int kWaves = 3;
  std::array<std::array<double, 3>, kWaves> waves{};
  for (auto& w : waves) {
    w[0] = field_rng.uniform(-1.5, 1.5) * 2.0 * std::numbers::pi / W;
    w[1] = field_rng.uniform(-1.5, 1.5) * 2.0 * std::numbers::pi / H;
    w[2] = field_rng.uniform(0.0, 2.0 * std::numbers::pi);
  }
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      double f = 0.0;
      for (const auto& w : waves) f += std::cos(w[0] * x + w[1] * y + w[2]);
      out.background(y, x) = spec.speckle_mean + spec.background_amplitude * f / kWaves;
    }
  }
  out.expected = out.background;
  if (spec.mine_class == MineClass::None) return out;

  const double taper = taper_strength(spec.mine_class);
  const Vec2 cast{-spec.insonify_dir.x, -spec.insonify_dir.y};
  for (int y = 0; y < H; ++y) {
    for (int x = 0; x < W; ++x) {
      const double r2 = ellipse_r2(spec, x, y);
      const double bg = out.background(y, x);
      if (r2 <= 1.0) {
        out.highlight(y, x) = 1;
        out.expected(y, x) = bg + spec.highlight_gain * (1.0 - bg) * (1.0 - taper * r2);
        continue;
      }
      // Shadow: points reached by sliding the (slowly widening) footprint
      // away from the sonar by up to shadow_len.
      for (double s = kShadowStep; s <= spec.shadow_len + 1e-12; s += kShadowStep) {
        const double grow = 1.0 + kShadowSpread * s / std::max(spec.shadow_len, 1e-12);
        if (ellipse_r2(spec, x - s * cast.x, y - s * cast.y) <= grow * grow) {
          out.shadow(y, x) = 1;
          out.expected(y, x) = bg * (1.0 - kShadowAttenuation);
          break;
        }
      }
    }
  }
  return out;
}

Plane to_storable(const Plane& p) {
  Plane out = p;
  for (auto& v : out.values()) {
    v = static_cast<double>(static_cast<float>(std::clamp(v, 0.0, 1.0)));
  }
  return out;
}

LabeledImage synth_scene(const SceneSpec& spec) {
  SceneLayers layers = render_layers(spec);
  Rng rng(derive_seed(spec.seed, kStreamSpeckle));
  Plane pixels = layers.expected;
  for (std::size_t i = 0; i < pixels.size(); ++i) {
    const double scale = layers.shadow[i] ? kShadowNoiseScale : 1.0;
    pixels[i] += scale * spec.speckle_std * rng.normal();
  }
  LabeledImage img;
  img.pixels = to_storable(pixels);
  img.mask = std::move(layers.highlight);
  img.mine_class = spec.mine_class;
  img.provenance = Provenance::Original;
  img.seed = spec.seed;
  return img;
}

SceneSpec random_scene_spec(MineClass cls, std::uint64_t seed, int width, int height) {
  Rng rng(seed);
  SceneSpec s;
  s.width = width;
  s.height = height;
  s.mine_class = cls;
  s.seed = derive_seed(seed, 0x5ce4e);
  s.speckle_mean = rng.uniform(0.30, 0.45);
  s.speckle_std = rng.uniform(0.04, 0.07);
  s.highlight_gain = rng.uniform(0.5, 0.8);
  s.shadow_len = rng.uniform(4.0, 9.0);
  // Port or starboard looking, with some heading jitter.
  const double side = rng.uniform() < 0.5 ? 0.0 : std::numbers::pi;
  const double heading = side + rng.uniform(-0.3, 0.3);
  s.insonify_dir = {std::cos(heading), std::sin(heading)};
  s.orientation = rng.uniform(0.0, std::numbers::pi);
  if (cls == MineClass::Conical) {
    s.semi_major = rng.uniform(2.5, 3.5);
    s.semi_minor = s.semi_major * rng.uniform(0.85, 1.0);
  } else if (cls == MineClass::Cylindrical) {
    s.semi_major = rng.uniform(4.0, 6.0);
    s.semi_minor = rng.uniform(1.5, 2.2);
  }
  const Vec2 h = half_extent(s);
  const double mx = std::ceil(h.x) + 1.0, my = std::ceil(h.y) + 1.0;
  s.mine_center = {rng.uniform(mx, width - 1 - mx), rng.uniform(my, height - 1 - my)};
  return s;
}

std::map<std::string, std::size_t> Dataset::counts_by_class() const {
  std::map<std::string, std::size_t> c;
  for (const auto& it : items) ++c[std::string(to_string(it.mine_class))];
  return c;
}

std::map<std::string, std::size_t> Dataset::counts_by_provenance() const {
  std::map<std::string, std::size_t> c;
  for (const auto& it : items) ++c[std::string(to_string(it.provenance))];
  return c;
}

Dataset synth_dataset(int n_per_class, const std::vector<MineClass>& classes,
                      std::uint64_t base_seed, int width, int height) {
  if (n_per_class < 1) throw InvalidArgument("synth_dataset: n_per_class must be >= 1");
  Dataset ds;
  ds.base_seed = base_seed;
  ds.items.reserve(static_cast<std::size_t>(n_per_class) * classes.size());
  for (MineClass cls : classes) {
    for (int i = 0; i < n_per_class; ++i) {
      const auto seed = derive_seed(base_seed, static_cast<std::uint64_t>(cls) + 100,
                                    static_cast<std::uint64_t>(i));
      ds.items.push_back(synth_scene(random_scene_spec(cls, seed, width, height)));
    }
  }
  return ds;
}

namespace {

template <typename T, typename Map>
Grid<T> remap(const Grid<T>& in, int out_h, int out_w, Map&& src) {
  Grid<T> out(out_h, out_w);
  for (int y = 0; y < out_h; ++y) {
    for (int x = 0; x < out_w; ++x) {
      auto [sy, sx] = src(y, x);
      out(y, x) = in(sy, sx);
    }
  }
  return out;
}

struct OpVisitor {
  LabeledImage& img;

  template <typename Map>
  void geometric(Map&& m) {
    const int H = img.pixels.height(), W = img.pixels.width();
    img.pixels = remap(img.pixels, H, W, m);
    img.mask = remap(img.mask, H, W, m);
  }

  void operator()(const HFlip&) {
    const int W = img.pixels.width();
    geometric([W](int y, int x) { return std::pair{y, W - 1 - x}; });
  }
  void operator()(const VFlip&) {
    const int H = img.pixels.height();
    geometric([H](int y, int x) { return std::pair{H - 1 - y, x}; });
  }
  void operator()(const IntensityJitter& j) {
    if (!(std::abs(j.delta) <= 1.0)) throw InvalidArgument("IntensityJitter: |delta| must be <= 1");
    if (j.delta == 0.0) return;
    for (auto& v : img.pixels.values()) v += j.delta;
    img.pixels = to_storable(img.pixels);
  }
  void operator()(const CropResize& c) {
    const int H = img.pixels.height(), W = img.pixels.width();
    if (c.crop_width < 1 || c.crop_height < 1 || c.x0 < 0 || c.y0 < 0 ||
        c.x0 + c.crop_width > W || c.y0 + c.crop_height > H) {
      throw InvalidArgument("CropResize: crop box outside the image");
    }
    geometric([&](int y, int x) {
      const int sy = c.y0 + static_cast<int>((y + 0.5) * c.crop_height / H);
      const int sx = c.x0 + static_cast<int>((x + 0.5) * c.crop_width / W);
      return std::pair{std::min(sy, c.y0 + c.crop_height - 1), std::min(sx, c.x0 + c.crop_width - 1)};
    });
    if (img.mine_class != MineClass::None && mask_count(img.mask) == 0) {
      throw InvalidArgument("CropResize: crop removes the whole mine");
    }
  }
};

}  // namespace

LabeledImage augment(const LabeledImage& img, const std::vector<AugmentOp>& ops) {
  LabeledImage out = img;
  OpVisitor visitor{out};
  for (const auto& op : ops) std::visit(visitor, op);
  return out;
}

std::vector<AugmentOp> random_augment_ops(const LabeledImage& img, Rng& rng) {
  std::vector<AugmentOp> ops;
  const bool hflip = rng.uniform() < 0.5, vflip = rng.uniform() < 0.5;
  if (hflip) ops.emplace_back(HFlip{});
  if (vflip) ops.emplace_back(VFlip{});
  ops.emplace_back(IntensityJitter{rng.uniform(-0.05, 0.05)});
  if (rng.uniform() < 0.5) {
    const int H = img.pixels.height(), W = img.pixels.width();
    // Mask bounding box; the crop must contain it.
    int x_lo = W, x_hi = -1, y_lo = H, y_hi = -1;
    for (int y = 0; y < H; ++y) {
      for (int x = 0; x < W; ++x) {
        if (img.mask(y, x)) {
          x_lo = std::min(x_lo, x); x_hi = std::max(x_hi, x);
          y_lo = std::min(y_lo, y); y_hi = std::max(y_hi, y);
        }
      }
    }
    // the crop applies after the flips
    if (x_hi >= 0 && hflip) std::tie(x_lo, x_hi) = std::pair{W - 1 - x_hi, W - 1 - x_lo};
    if (y_hi >= 0 && vflip) std::tie(y_lo, y_hi) = std::pair{H - 1 - y_hi, H - 1 - y_lo};
    const int cw = std::max(rng.uniform_int(W * 3 / 4, W), x_hi - x_lo + 1);
    const int ch = std::max(rng.uniform_int(H * 3 / 4, H), y_hi - y_lo + 1);
    int x0_min = 0, x0_max = W - cw, y0_min = 0, y0_max = H - ch;
    if (x_hi >= 0) {
      x0_min = std::max(0, x_hi - cw + 1); x0_max = std::min(x0_max, x_lo);
      y0_min = std::max(0, y_hi - ch + 1); y0_max = std::min(y0_max, y_lo);
    }
    if (x0_min <= x0_max && y0_min <= y0_max) {
      ops.emplace_back(CropResize{rng.uniform_int(x0_min, x0_max), rng.uniform_int(y0_min, y0_max), cw, ch});
    }
  }
  return ops;
}

}  // namespace sonardiff
