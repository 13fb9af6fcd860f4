#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <vector>

#include "lgeq/core/grid.hpp"

namespace lgeq {

struct Offset {
  int dx = 0, dy = 0;
  friend bool operator==(const Offset&, const Offset&) = default;
  friend auto operator<=>(const Offset&, const Offset&) = default;
};

/// Binary 2-D footprint. Offsets are relative to the anchor, which is
/// always a member.
class StructuringElement {
 public:
  enum class Kind { disk, bar, custom };

  StructuringElement() : offsets_{{0, 0}} {}
  StructuringElement(std::vector<Offset> offsets, Kind kind = Kind::custom)
      : offsets_(std::move(offsets)), kind_(kind) {}

  /// All offsets with dx^2 + dy^2 <= r^2.
  static StructuringElement disk(int radius) {
    std::vector<Offset> o;
    for (int dy = -radius; dy <= radius; ++dy)
      for (int dx = -radius; dx <= radius; ++dx)
        if (dx * dx + dy * dy <= radius * radius) o.push_back({dx, dy});
    StructuringElement se(std::move(o), Kind::disk);
    se.radius_ = radius;
    return se;
  }

  /// L collinear pixels along (cos t, -sin t) (image y points down).
  /// Steps along the dominant axis and rounds the minor coordinate.
  /// Members are ordered from the positive end; the anchor is member
  /// floor(L/2), so an even L puts one extra pixel on the positive side.
  static StructuringElement bar(int length, double theta_deg) {
    const double a = theta_deg * std::numbers::pi / 180.0;
    const double dx = std::cos(a);
    const double dy = -std::sin(a);
    const int half = length / 2;
    std::vector<Offset> o;
    o.reserve(static_cast<std::size_t>(std::max(length, 0)));
    for (int k = 0; k < length; ++k) {
      const int t = half - k;
      if (std::abs(dx) >= std::abs(dy)) {
        const int sx = dx >= 0 ? 1 : -1;
        o.push_back({t * sx, static_cast<int>(std::lround(t * dy / std::abs(dx)))});
      } else {
        const int sy = dy >= 0 ? 1 : -1;
        o.push_back({static_cast<int>(std::lround(t * dx / std::abs(dy))), t * sy});
      }
    }
    StructuringElement se(std::move(o), Kind::bar);
    se.length_ = length;
    se.theta_ = theta_deg;
    return se;
  }

  const std::vector<Offset>& offsets() const { return offsets_; }
  std::size_t size() const { return offsets_.size(); }
  Kind kind() const { return kind_; }
  int radius() const { return radius_; }
  int length() const { return length_; }
  double theta() const { return theta_; }

  StructuringElement reflected() const {
    std::vector<Offset> o;
    o.reserve(offsets_.size());
    for (auto [dx, dy] : offsets_) o.push_back({-dx, -dy});
    StructuringElement se(std::move(o), kind_);
    se.radius_ = radius_;
    se.length_ = length_;
    se.theta_ = theta_;
    return se;
  }

 private:
  std::vector<Offset> offsets_;
  Kind kind_ = Kind::custom;
  int radius_ = 0;
  int length_ = 0;
  double theta_ = 0.0;
};

// ---- grayscale ----------------------------------------------------------
// Out-of-bounds samples are ignored: min/max run over in-bounds members only.

namespace detail {
template <class T, class Pick>
Image2D<T> rank_filter(const Image2D<T>& in, const std::vector<Offset>& offsets, Pick pick) {
  Image2D<T> out(in.nx(), in.ny());
  for (int y = 0; y < in.ny(); ++y) {
    for (int x = 0; x < in.nx(); ++x) {
      bool have = false;
      T best{};
      for (const auto& o : offsets) {
        const int qx = x + o.dx, qy = y + o.dy;
        if (!in.in_bounds(qx, qy)) continue;
        const T v = in(qx, qy);
        if (!have || pick(v, best)) {
          best = v;
          have = true;
        }
      }
      out(x, y) = best;
    }
  }
  return out;
}
}  // namespace detail

/// out(p) = min over o in se of in(p + o).
template <class T>
Image2D<T> gray_erode(const Image2D<T>& in, const StructuringElement& se) {
  return detail::rank_filter(in, se.offsets(), [](T a, T b) { return a < b; });
}

/// out(p) = max over o in se of in(p - o).
template <class T>
Image2D<T> gray_dilate(const Image2D<T>& in, const StructuringElement& se) {
  return detail::rank_filter(in, se.reflected().offsets(), [](T a, T b) { return a > b; });
}

template <class T>
Image2D<T> gray_open(const Image2D<T>& in, const StructuringElement& se) {
  return gray_dilate(gray_erode(in, se), se);
}

template <class T>
Image2D<T> gray_close(const Image2D<T>& in, const StructuringElement& se) {
  return gray_erode(gray_dilate(in, se), se);
}

/// in - opening(in); nonnegative everywhere.
template <class T>
Image2D<T> white_tophat(const Image2D<T>& in, const StructuringElement& se) {
  Image2D<T> out = gray_open(in, se);
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[i] - out[i];
  return out;
}

// ---- binary -------------------------------------------------------------
// Outside the slice counts as background.

inline MaskSlice binary_erode(const MaskSlice& in, const StructuringElement& se) {
  MaskSlice out(in.nx(), in.ny());
  const bool has_anchor =
      std::find(se.offsets().begin(), se.offsets().end(), Offset{0, 0}) != se.offsets().end();
  for (int y = 0; y < in.ny(); ++y)
    for (int x = 0; x < in.nx(); ++x) {
      if (has_anchor && !in(x, y)) continue;
      bool all = true;
      for (const auto& o : se.offsets()) {
        const int qx = x + o.dx, qy = y + o.dy;
        if (!in.in_bounds(qx, qy) || !in(qx, qy)) {
          all = false;
          break;
        }
      }
      out(x, y) = all ? 1 : 0;
    }
  return out;
}

inline MaskSlice binary_dilate(const MaskSlice& in, const StructuringElement& se) {
  MaskSlice out(in.nx(), in.ny());
  for (int y = 0; y < in.ny(); ++y)
    for (int x = 0; x < in.nx(); ++x) {
      if (!in(x, y)) continue;
      for (const auto& o : se.offsets()) {
        const int qx = x + o.dx, qy = y + o.dy;
        if (out.in_bounds(qx, qy)) out(qx, qy) = 1;
      }
    }
  return out;
}

inline MaskSlice binary_open(const MaskSlice& in, const StructuringElement& se) {
  return binary_dilate(binary_erode(in, se), se);
}

inline MaskSlice binary_close(const MaskSlice& in, const StructuringElement& se) {
  return binary_erode(binary_dilate(in, se), se);
}

}  // namespace lgeq
