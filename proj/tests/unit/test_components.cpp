#include <gtest/gtest.h>

#include <algorithm>
#include <map>
#include <set>

#include "sonardiff/components.hpp"
#include "sonardiff/random.hpp"

using namespace sonardiff;

namespace {

// Recursive flood fill labelling; independent of the library's approach.
void flood(const Mask& m, std::vector<int>& label, int y, int x, int id) {
  if (y < 0 || x < 0 || y >= m.height() || x >= m.width()) return;
  const auto i = static_cast<std::size_t>(y * m.width() + x);
  if (!m[i] || label[i] >= 0) return;
  label[i] = id;
  flood(m, label, y + 1, x, id);
  flood(m, label, y - 1, x, id);
  flood(m, label, y, x + 1, id);
  flood(m, label, y, x - 1, id);
}

std::set<std::vector<std::size_t>> oracle(const Mask& m) {
  std::vector<int> label(m.size(), -1);
  int next = 0;
  for (int y = 0; y < m.height(); ++y)
    for (int x = 0; x < m.width(); ++x) flood(m, label, y, x, next++);
  std::map<int, std::vector<std::size_t>> groups;
  for (std::size_t i = 0; i < label.size(); ++i)
    if (label[i] >= 0) groups[label[i]].push_back(i);
  std::set<std::vector<std::size_t>> out;
  for (auto& [id, px] : groups) out.insert(px);
  return out;
}

}  // namespace

TEST(Components, MatchesFloodFillOnRandomMasks) {
  Rng rng(5);
  for (int trial = 0; trial < 200; ++trial) {
    const int h = rng.uniform_int(1, 20), w = rng.uniform_int(1, 20);
    const double density = rng.uniform(0.1, 0.7);
    Mask m(h, w);
    for (auto& v : m.values()) v = rng.uniform() < density;
    const auto comps = connected_components(m);
    std::set<std::vector<std::size_t>> got(comps.begin(), comps.end());
    ASSERT_EQ(got, oracle(m));
    for (std::size_t i = 1; i < comps.size(); ++i) ASSERT_LT(comps[i - 1].front(), comps[i].front());
    for (const auto& c : comps) ASSERT_TRUE(std::is_sorted(c.begin(), c.end()));
  }
}

TEST(Components, DiagonalNeighboursAreSeparate) {
  Mask m(3, 3);
  m(0, 0) = 1;
  m(1, 1) = 1;
  m(2, 2) = 1;
  EXPECT_EQ(connected_components(m).size(), 3u);
}

TEST(Components, ComponentMaskRebuildsPixels) {
  Mask m(4, 4);
  m(1, 1) = m(1, 2) = m(2, 2) = 1;
  const auto comps = connected_components(m);
  ASSERT_EQ(comps.size(), 1u);
  EXPECT_EQ(component_mask(comps[0], 4, 4), m);
}
