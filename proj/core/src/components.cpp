#include "sonardiff/components.hpp"

#include <algorithm>

namespace sonardiff {

std::vector<std::vector<std::size_t>> connected_components(const Mask& mask) {
  const int H = mask.height(), W = mask.width();
  std::vector<std::uint8_t> seen(mask.size(), 0);
  std::vector<std::vector<std::size_t>> out;
  std::vector<std::size_t> stack;
  for (std::size_t start = 0; start < mask.size(); ++start) {
    if (!mask[start] || seen[start]) continue;
    std::vector<std::size_t> comp;
    stack.push_back(start);
    seen[start] = 1;
    while (!stack.empty()) {
      const std::size_t i = stack.back();
      stack.pop_back();
      comp.push_back(i);
      const int y = static_cast<int>(i / static_cast<std::size_t>(W));
      const int x = static_cast<int>(i % static_cast<std::size_t>(W));
      const int ny[4] = {y - 1, y + 1, y, y};
      const int nx[4] = {x, x, x - 1, x + 1};
      for (int k = 0; k < 4; ++k) {
        if (ny[k] < 0 || ny[k] >= H || nx[k] < 0 || nx[k] >= W) continue;
        const auto j = static_cast<std::size_t>(ny[k]) * static_cast<std::size_t>(W) +
                       static_cast<std::size_t>(nx[k]);
        if (mask[j] && !seen[j]) {
          seen[j] = 1;
          stack.push_back(j);
        }
      }
    }
    std::sort(comp.begin(), comp.end());
    out.push_back(std::move(comp));
  }
  return out;
}

Mask component_mask(const std::vector<std::size_t>& pixels, int height, int width) {
  Mask m(height, width);
  for (auto i : pixels) m[i] = 1;
  return m;
}

}  // namespace sonardiff
