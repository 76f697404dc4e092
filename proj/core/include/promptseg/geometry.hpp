#pragma once

#include <compare>
#include <cstddef>
#include <string>

namespace promptseg {

/// Integer voxel coordinate (w, h, d).
struct Index3 {
  int w = 0;
  int h = 0;
  int d = 0;

  auto operator<=>(const Index3&) const = default;
};

/// Spatial extent in voxels.
struct Size3 {
  int w = 1;
  int h = 1;
  int d = 1;

  std::size_t voxels() const noexcept {
    return static_cast<std::size_t>(w) * static_cast<std::size_t>(h) *
           static_cast<std::size_t>(d);
  }
  bool positive() const noexcept { return w >= 1 && h >= 1 && d >= 1; }
  bool contains(Index3 p) const noexcept {
    return p.w >= 0 && p.h >= 0 && p.d >= 0 && p.w < w && p.h < h && p.d < d;
  }

  auto operator<=>(const Size3&) const = default;
};

std::string to_string(Index3 p);
std::string to_string(Size3 s);

}  // namespace promptseg
