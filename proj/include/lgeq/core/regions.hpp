#pragma once

#include <array>
#include <cstdint>
#include <utility>
#include <vector>

#include "lgeq/core/grid.hpp"

namespace lgeq {

enum class Connectivity { four = 4, eight = 8 };

struct Labeling {
  Image2D<int> labels;  // 0 = background, components dense 1..count
  int count = 0;
};

namespace detail {
inline const std::vector<std::pair<int, int>>& neighbours(Connectivity c) {
  static const std::vector<std::pair<int, int>> n4{{1, 0}, {-1, 0}, {0, 1}, {0, -1}};
  static const std::vector<std::pair<int, int>> n8{{1, 0}, {-1, 0}, {0, 1}, {0, -1},
                                                   {1, 1}, {-1, 1}, {1, -1}, {-1, -1}};
  return c == Connectivity::four ? n4 : n8;
}
}  // namespace detail

/// Labels components in raster order of their first pixel.
inline Labeling connected_components(const MaskSlice& mask, Connectivity conn = Connectivity::eight) {
  Labeling out{Image2D<int>(mask.nx(), mask.ny(), 0), 0};
  std::vector<std::pair<int, int>> stack;
  const auto& nb = detail::neighbours(conn);
  for (int y = 0; y < mask.ny(); ++y)
    for (int x = 0; x < mask.nx(); ++x) {
      if (!mask(x, y) || out.labels(x, y)) continue;
      const int label = ++out.count;
      out.labels(x, y) = label;
      stack.assign(1, {x, y});
      while (!stack.empty()) {
        auto [cx, cy] = stack.back();
        stack.pop_back();
        for (auto [dx, dy] : nb) {
          const int qx = cx + dx, qy = cy + dy;
          if (mask.in_bounds(qx, qy) && mask(qx, qy) && !out.labels(qx, qy)) {
            out.labels(qx, qy) = label;
            stack.push_back({qx, qy});
          }
        }
      }
    }
  return out;
}

/// Background pixels unreachable from the slice border (through background,
/// under `conn`) are added to the mask.
inline MaskSlice fill_holes_2d(const MaskSlice& mask, Connectivity conn = Connectivity::four) {
  const int nx = mask.nx(), ny = mask.ny();
  MaskSlice outside(nx, ny, 0);
  std::vector<std::pair<int, int>> stack;
  auto seed = [&](int x, int y) {
    if (!mask(x, y) && !outside(x, y)) {
      outside(x, y) = 1;
      stack.push_back({x, y});
    }
  };
  for (int x = 0; x < nx; ++x) {
    seed(x, 0);
    seed(x, ny - 1);
  }
  for (int y = 0; y < ny; ++y) {
    seed(0, y);
    seed(nx - 1, y);
  }
  const auto& nb = detail::neighbours(conn);
  while (!stack.empty()) {
    auto [cx, cy] = stack.back();
    stack.pop_back();
    for (auto [dx, dy] : nb) {
      const int qx = cx + dx, qy = cy + dy;
      if (mask.in_bounds(qx, qy) && !mask(qx, qy) && !outside(qx, qy)) {
        outside(qx, qy) = 1;
        stack.push_back({qx, qy});
      }
    }
  }
  MaskSlice out(nx, ny, 0);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = outside[i] ? 0 : 1;
  return out;
}

/// Centroid (x, y) of the nonzero pixels. Throws EmptyMask.
inline std::pair<double, double> centroid(const MaskSlice& mask) {
  double sx = 0, sy = 0;
  std::size_t n = 0;
  for (int y = 0; y < mask.ny(); ++y)
    for (int x = 0; x < mask.nx(); ++x)
      if (mask(x, y)) {
        sx += x;
        sy += y;
        ++n;
      }
  if (n == 0) throw EmptyMask("centroid of an empty mask");
  return {sx / static_cast<double>(n), sy / static_cast<double>(n)};
}

}  // namespace lgeq
