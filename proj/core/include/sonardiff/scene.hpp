#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "sonardiff/plane.hpp"
#include "sonardiff/random.hpp"

namespace sonardiff {

enum class MineClass { None, Conical, Cylindrical };
enum class Provenance { Original, DDPM, DDIM };

std::string_view to_string(MineClass c);
std::string_view to_string(Provenance p);
MineClass parse_mine_class(std::string_view s);
Provenance parse_provenance(std::string_view s);

struct Vec2 {
  double x = 0.0;
  double y = 0.0;
};

// Parameters of one procedurally rendered side-scan scene. Lengths are in
// pixels, intensities in [0,1]. `insonify_dir` points from the target back
// toward the sonar, so the acoustic shadow is cast along -insonify_dir.
struct SceneSpec {
  int width = 32;
  int height = 32;
  MineClass mine_class = MineClass::Conical;
  Vec2 mine_center{16.0, 16.0};
  double semi_major = 3.0;   // half-length of the footprint's long axis
  double semi_minor = 2.8;
  double orientation = 0.0;  // long-axis angle, radians from +x
  Vec2 insonify_dir{1.0, 0.0};
  double highlight_gain = 0.6;
  double shadow_len = 6.0;
  double speckle_mean = 0.4;
  double speckle_std = 0.05;
  double background_amplitude = 0.02;  // low-frequency seabed variation
  std::uint64_t seed = 0;

  // Throws InvalidArgument with a diagnostic when an invariant is broken
  // (including a mine footprint that leaves the image).
  void validate() const;
};

struct LabeledImage {
  Plane pixels;  // [0,1], every value exactly representable as float32
  Mask mask;     // 1 on the mine highlight
  MineClass mine_class = MineClass::None;
  Provenance provenance = Provenance::Original;
  std::uint64_t seed = 0;

  friend bool operator==(const LabeledImage&, const LabeledImage&) = default;
};

// Noise-free rendering and the region labels it was built from.
struct SceneLayers {
  Plane expected;      // intensity before speckle
  Plane background;    // seabed field alone
  Mask highlight;
  Mask shadow;
};

SceneLayers render_layers(const SceneSpec& spec);
LabeledImage synth_scene(const SceneSpec& spec);

// Randomized spec for one image of the given class; all variation (pose,
// range, gain, speckle level) is a pure function of `seed`.
SceneSpec random_scene_spec(MineClass cls, std::uint64_t seed, int width = 32, int height = 32);

struct Dataset {
  std::vector<LabeledImage> items;
  std::uint64_t base_seed = 0;

  std::size_t size() const noexcept { return items.size(); }
  std::map<std::string, std::size_t> counts_by_class() const;
  std::map<std::string, std::size_t> counts_by_provenance() const;
  friend bool operator==(const Dataset&, const Dataset&) = default;
};

Dataset synth_dataset(int n_per_class, const std::vector<MineClass>& classes,
                      std::uint64_t base_seed, int width = 32, int height = 32);

struct HFlip {};
struct VFlip {};
struct IntensityJitter {
  double delta = 0.0;
};
struct CropResize {
  int x0 = 0, y0 = 0, crop_width = 0, crop_height = 0;
};
using AugmentOp = std::variant<HFlip, VFlip, IntensityJitter, CropResize>;

// Applies `ops` left to right. Geometric ops move pixels and mask through
// the same nearest-neighbour map, so the mask stays aligned pixel for pixel.
LabeledImage augment(const LabeledImage& img, const std::vector<AugmentOp>& ops);

// A random op list that keeps the mine inside any crop.
std::vector<AugmentOp> random_augment_ops(const LabeledImage& img, Rng& rng);

// Rounds to float32 and clamps to [0,1].
Plane to_storable(const Plane& p);

}  // namespace sonardiff
