#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lgeq/core/error.hpp"

namespace lgeq {

/// Voxel counts along x, y, z.
struct Dims3 {
  int nx = 1, ny = 1, nz = 1;

  std::size_t count() const {
    return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) * static_cast<std::size_t>(nz);
  }
  friend bool operator==(const Dims3&, const Dims3&) = default;
};

/// Physical voxel size in mm.
struct Spacing3 {
  double sx = 1.0, sy = 1.0, sz = 1.0;

  double voxel_volume_mm3() const { return sx * sy * sz; }
  friend bool operator==(const Spacing3&, const Spacing3&) = default;
};

/// Dense 2-D grid, x fastest.
template <class T>
class Image2D {
 public:
  using value_type = T;

  Image2D() = default;
  Image2D(int nx, int ny, T fill = T{}) : nx_(nx), ny_(ny), data_(checked_size(nx, ny), fill) {}
  Image2D(int nx, int ny, std::vector<T> data) : nx_(nx), ny_(ny), data_(std::move(data)) {
    if (data_.size() != checked_size(nx, ny)) throw ShapeError("Image2D: data length does not match dims");
  }

  int nx() const { return nx_; }
  int ny() const { return ny_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  bool in_bounds(int x, int y) const { return x >= 0 && y >= 0 && x < nx_ && y < ny_; }
  std::size_t index(int x, int y) const {
    return static_cast<std::size_t>(y) * static_cast<std::size_t>(nx_) + static_cast<std::size_t>(x);
  }

  T& operator()(int x, int y) { return data_[index(x, y)]; }
  const T& operator()(int x, int y) const { return data_[index(x, y)]; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  std::vector<T>& raw() { return data_; }
  const std::vector<T>& raw() const { return data_; }

  bool same_shape(const auto& other) const { return nx_ == other.nx() && ny_ == other.ny(); }

  friend bool operator==(const Image2D&, const Image2D&) = default;

 private:
  static std::size_t checked_size(int nx, int ny) {
    if (nx < 1 || ny < 1) throw ShapeError("Image2D: dims must be >= 1");
    return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny);
  }

  int nx_ = 0, ny_ = 0;
  std::vector<T> data_;
};

/// Dense 3-D grid with physical spacing; x fastest, then y, then z.
template <class T>
class Grid3D {
 public:
  using value_type = T;

  Grid3D() = default;
  Grid3D(Dims3 dims, Spacing3 spacing, T fill = T{}) : dims_(dims), spacing_(spacing) {
    validate();
    data_.assign(dims_.count(), fill);
  }
  Grid3D(Dims3 dims, Spacing3 spacing, std::vector<T> data)
      : dims_(dims), spacing_(spacing), data_(std::move(data)) {
    validate();
    if (data_.size() != dims_.count()) throw ShapeError("Grid3D: data length does not match dims");
  }

  const Dims3& dims() const { return dims_; }
  const Spacing3& spacing() const { return spacing_; }
  void set_spacing(Spacing3 s) {
    spacing_ = s;
    validate();
  }
  std::size_t size() const { return data_.size(); }
  std::size_t slice_size() const { return static_cast<std::size_t>(dims_.nx) * static_cast<std::size_t>(dims_.ny); }

  std::size_t index(int x, int y, int z) const {
    return (static_cast<std::size_t>(z) * static_cast<std::size_t>(dims_.ny) + static_cast<std::size_t>(y)) *
               static_cast<std::size_t>(dims_.nx) +
           static_cast<std::size_t>(x);
  }
  T& operator()(int x, int y, int z) { return data_[index(x, y, z)]; }
  const T& operator()(int x, int y, int z) const { return data_[index(x, y, z)]; }
  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  std::vector<T>& raw() { return data_; }
  const std::vector<T>& raw() const { return data_; }

  Image2D<T> slice(int z) const {
    const auto first = data_.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(z) * slice_size());
    return Image2D<T>(dims_.nx, dims_.ny, std::vector<T>(first, first + static_cast<std::ptrdiff_t>(slice_size())));
  }
  void set_slice(int z, const Image2D<T>& s) {
    if (s.nx() != dims_.nx || s.ny() != dims_.ny) throw ShapeError("Grid3D::set_slice: shape mismatch");
    std::copy(s.raw().begin(), s.raw().end(),
              data_.begin() + static_cast<std::ptrdiff_t>(static_cast<std::size_t>(z) * slice_size()));
  }

  bool same_geometry(const auto& other) const {
    return dims_ == other.dims() && spacing_ == other.spacing();
  }

  friend bool operator==(const Grid3D&, const Grid3D&) = default;

 private:
  void validate() const {
    if (dims_.nx < 1 || dims_.ny < 1 || dims_.nz < 1) throw ShapeError("Grid3D: dims must be >= 1");
    if (!(spacing_.sx > 0 && spacing_.sy > 0 && spacing_.sz > 0)) throw ShapeError("Grid3D: spacing must be > 0");
  }

  Dims3 dims_{};
  Spacing3 spacing_{};
  std::vector<T> data_;
};

using Slice = Image2D<float>;
using MaskSlice = Image2D<std::uint8_t>;
using Volume = Grid3D<float>;
using Mask = Grid3D<std::uint8_t>;

// ---- small mask algebra -------------------------------------------------

template <class M>
std::size_t count_nonzero(const M& m) {
  return static_cast<std::size_t>(std::count_if(m.raw().begin(), m.raw().end(), [](auto v) { return v != 0; }));
}

template <class M>
bool any(const M& m) {
  return std::any_of(m.raw().begin(), m.raw().end(), [](auto v) { return v != 0; });
}

namespace detail {
template <class M, class Op>
M combine(const M& a, const M& b, Op op) {
  if (a.raw().size() != b.raw().size()) throw AlignmentError("mask shapes differ");
  M out = a;
  for (std::size_t i = 0; i < out.raw().size(); ++i) out.raw()[i] = op(a.raw()[i] != 0, b.raw()[i] != 0) ? 1 : 0;
  return out;
}
}  // namespace detail

template <class M>
M mask_and(const M& a, const M& b) {
  return detail::combine(a, b, [](bool x, bool y) { return x && y; });
}
template <class M>
M mask_or(const M& a, const M& b) {
  return detail::combine(a, b, [](bool x, bool y) { return x || y; });
}
/// a \ b
template <class M>
M mask_minus(const M& a, const M& b) {
  return detail::combine(a, b, [](bool x, bool y) { return x && !y; });
}
template <class M>
bool is_subset(const M& a, const M& b) {
  if (a.raw().size() != b.raw().size()) throw AlignmentError("mask shapes differ");
  for (std::size_t i = 0; i < a.raw().size(); ++i)
    if (a.raw()[i] && !b.raw()[i]) return false;
  return true;
}

/// Values of `img` at the nonzero pixels of `mask`, in raster order.
template <class I, class M>
std::vector<double> values_in(const I& img, const M& mask) {
  if (img.raw().size() != mask.raw().size()) throw AlignmentError("image and mask shapes differ");
  std::vector<double> out;
  for (std::size_t i = 0; i < mask.raw().size(); ++i)
    if (mask.raw()[i]) out.push_back(static_cast<double>(img.raw()[i]));
  return out;
}

inline bool all_finite(std::span<const float> v) {
  return std::all_of(v.begin(), v.end(), [](float x) { return std::isfinite(x); });
}

}  // namespace lgeq
