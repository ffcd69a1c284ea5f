#pragma once

// Small helpers shared by the test binaries.

#include <cstdint>
#include <filesystem>
#include <random>
#include <string>

#include "sonardiff/plane.hpp"

namespace sonardiff::testing {

// Fresh, empty directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("sonardiff_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

inline Mask rect_mask(int h, int w, int y0, int x0, int rh, int rw) {
  Mask m(h, w);
  for (int y = y0; y < y0 + rh; ++y)
    for (int x = x0; x < x0 + rw; ++x) m(y, x) = 1;
  return m;
}

inline double max_abs_diff(const Plane& a, const Plane& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) d = std::max(d, std::abs(a[i] - b[i]));
  return d;
}

// Symmetric relative error used by the finite-difference checks.
inline double rel_err(double a, double b) {
  const double scale = std::max({std::abs(a), std::abs(b), 1e-6});
  return std::abs(a - b) / scale;
}

}  // namespace sonardiff::testing
