#pragma once

#include <cstdint>
#include <random>

#include "sonardiff/plane.hpp"

namespace sonardiff {

// Child seed for (base, stream, index). Stable across platforms; every
// per-image and per-stage seed in the pipeline goes through this.
std::uint64_t derive_seed(std::uint64_t base, std::uint64_t stream, std::uint64_t index = 0);

// Seeded generator. Distributions are constructed per call so the stream
// only depends on the sequence of draws, never on hidden cached state.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  double uniform(double lo = 0.0, double hi = 1.0);
  double normal(double mean = 0.0, double stddev = 1.0);
  int uniform_int(int lo, int hi);  // inclusive
  Plane normal_plane(int height, int width);

  std::mt19937_64& engine() noexcept { return engine_; }

 private:
  std::mt19937_64 engine_;
};

}  // namespace sonardiff
