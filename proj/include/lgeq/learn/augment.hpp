#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <numbers>
#include <span>
#include <vector>

#include "lgeq/core/error.hpp"
#include "lgeq/core/rng.hpp"

namespace lgeq::learn {

/// One geometric transform about the patch centre. Default-constructed
/// parameters are the identity.
struct AugmentParams {
  double rotation_deg = 0.0;  // drawn in [-20, 20]
  double shear = 0.0;         // drawn in [-0.1, 0.1]
  bool flip_h = false;
  bool flip_v = false;
  double scale = 1.0;         // drawn in [0.9, 1.1]

  static AugmentParams random(Rng& rng) {
    AugmentParams p;
    p.rotation_deg = rng.uniform(-20.0, 20.0);
    p.shear = rng.uniform(-0.1, 0.1);
    p.flip_h = rng.bernoulli(0.5);
    p.flip_v = rng.bernoulli(0.5);
    p.scale = rng.uniform(0.9, 1.1);
    return p;
  }
};

/// Resamples a square single-channel patch (row-major, side n) through the
/// inverse of flip -> shear -> rotate -> scale, with bilinear
/// interpolation; samples falling outside read as zero.
template <class T>
std::vector<T> augment(std::span<const T> patch, int n, const AugmentParams& p) {
  if (patch.size() != static_cast<std::size_t>(n) * static_cast<std::size_t>(n))
    throw ShapeError("augment: patch must be square");
  const double a = p.rotation_deg * std::numbers::pi / 180.0;
  const double c = std::cos(a), s = std::sin(a);
  // forward map M = S * R * H * F; we need M^-1 for pull-back sampling.
  const double fx = p.flip_h ? -1.0 : 1.0, fy = p.flip_v ? -1.0 : 1.0;
  // H*F = [[fx, shear*fy], [0, fy]]
  const double m00 = p.scale * (c * fx), m01 = p.scale * (c * p.shear * fy - s * fy);
  const double m10 = p.scale * (s * fx), m11 = p.scale * (s * p.shear * fy + c * fy);
  const double det = m00 * m11 - m01 * m10;
  const double i00 = m11 / det, i01 = -m01 / det, i10 = -m10 / det, i11 = m00 / det;
  const double ctr = 0.5 * (n - 1);
  std::vector<T> out(patch.size(), T{});
  auto at = [&](int x, int y) -> double {
    if (x < 0 || y < 0 || x >= n || y >= n) return 0.0;
    return static_cast<double>(patch[static_cast<std::size_t>(y) * n + x]);
  };
  for (int y = 0; y < n; ++y)
    for (int x = 0; x < n; ++x) {
      const double u = x - ctr, v = y - ctr;
      const double sx = i00 * u + i01 * v + ctr;
      const double sy = i10 * u + i11 * v + ctr;
      const double flx = std::floor(sx), fly = std::floor(sy);
      const int x0 = static_cast<int>(flx), y0 = static_cast<int>(fly);
      const double tx = sx - flx, ty = sy - fly;
      double val = (1 - tx) * (1 - ty) * at(x0, y0);
      if (tx != 0.0) val += tx * (1 - ty) * at(x0 + 1, y0);
      if (ty != 0.0) val += (1 - tx) * ty * at(x0, y0 + 1);
      if (tx != 0.0 && ty != 0.0) val += tx * ty * at(x0 + 1, y0 + 1);
      out[static_cast<std::size_t>(y) * n + x] = static_cast<T>(val);
    }
  return out;
}

template <class T>
std::vector<T> augment(std::span<const T> patch, int n, std::uint64_t seed) {
  Rng rng(seed);
  return augment(patch, n, AugmentParams::random(rng));
}

/// Indices after randomly sub-sampling the majority class down to the
/// minority count. All minority samples are kept; output is sorted.
inline std::vector<std::size_t> balance_classes(std::span<const int> labels, std::uint64_t seed) {
  std::array<std::vector<std::size_t>, 2> by_class;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw ShapeError("balance_classes: labels must be 0 or 1");
    by_class[static_cast<std::size_t>(labels[i])].push_back(i);
  }
  if (by_class[0].empty() || by_class[1].empty()) throw EmptyClassError("balance_classes: a class has no samples");
  const std::size_t n = std::min(by_class[0].size(), by_class[1].size());
  Rng rng(seed);
  std::vector<std::size_t> out;
  for (auto& idx : by_class) {
    if (idx.size() > n) {
      rng.shuffle(idx);
      idx.resize(n);
    }
    out.insert(out.end(), idx.begin(), idx.end());
  }
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace lgeq::learn
