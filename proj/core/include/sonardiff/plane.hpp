#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "sonardiff/error.hpp"

namespace sonardiff {

// Row-major H x W grid of values. Used both for images and for
// intermediate diffusion states, which are not confined to [0,1].
template <typename T>
class Grid {
 public:
  Grid() = default;
  Grid(int height, int width, T fill = T{})
      : height_(height), width_(width) {
    if (height < 0 || width < 0) throw InvalidArgument("Grid: negative dimension");
    data_.assign(static_cast<std::size_t>(height) * static_cast<std::size_t>(width), fill);
  }

  int height() const noexcept { return height_; }
  int width() const noexcept { return width_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(int y, int x) { return data_[index(y, x)]; }
  const T& operator()(int y, int x) const { return data_[index(y, x)]; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }

  bool same_shape(const Grid& other) const noexcept {
    return height_ == other.height_ && width_ == other.width_;
  }

  friend bool operator==(const Grid&, const Grid&) = default;

 private:
  std::size_t index(int y, int x) const noexcept {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(width_) +
           static_cast<std::size_t>(x);
  }

  int height_ = 0;
  int width_ = 0;
  std::vector<T> data_;
};

using Plane = Grid<double>;
using Mask = Grid<std::uint8_t>;

template <typename A, typename B>
void require_same_shape(const Grid<A>& a, const Grid<B>& b, const char* what) {
  if (a.height() != b.height() || a.width() != b.width()) {
    throw InvalidArgument(std::string(what) + ": shape mismatch");
  }
}

inline std::size_t mask_count(const Mask& m) {
  std::size_t n = 0;
  for (auto v : m.values()) n += (v != 0);
  return n;
}

}  // namespace sonardiff
