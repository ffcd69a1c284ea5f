#pragma once

#include <cstddef>
#include <vector>

#include "sonardiff/plane.hpp"

namespace sonardiff {

// 4-connected components of the nonzero pixels, each as a list of linear
// pixel indices. Components are ordered by their first pixel in row-major
// scan order, and pixels within a component are sorted.
std::vector<std::vector<std::size_t>> connected_components(const Mask& mask);

Mask component_mask(const std::vector<std::size_t>& pixels, int height, int width);

}  // namespace sonardiff
