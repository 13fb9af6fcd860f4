#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <vector>

#include "lgeq/core/case.hpp"
#include "lgeq/core/grid.hpp"

namespace lgeq::preprocess {

struct NlmConfig {
  int patch_radius = 1;   // 3x3 patches
  int search_radius = 3;  // 7x7 window
  double h_factor = 0.6;  // h = h_factor * sigma
};

struct PreprocessConfig {
  Spacing3 target_spacing{1.25, 1.25, 8.0};
  double gamma = 1.5;
  NlmConfig nlm;
  double p_lo = 1.0;   // percentile of myocardial intensities mapped to 0
  double p_hi = 99.0;  // percentile of blood-pool intensities mapped to 255
  bool denoise = true;
  bool allow_through_plane = false;

  void validate() const {
    if (!(target_spacing.sx > 0 && target_spacing.sy > 0 && target_spacing.sz > 0))
      throw ConfigError("preprocess: target spacing must be > 0");
    if (!(gamma > 0)) throw ConfigError("preprocess: gamma must be > 0");
    if (!(p_lo >= 0 && p_lo < p_hi && p_hi <= 100)) throw ConfigError("preprocess: need 0 <= p_lo < p_hi <= 100");
    if (nlm.patch_radius < 0 || nlm.search_radius < 0 || !(nlm.h_factor > 0))
      throw ConfigError("preprocess: invalid NLM parameters");
  }
};

/// Linear-interpolated percentile (0..100) of unsorted values.
inline double percentile(std::vector<double> v, double p) {
  if (v.empty()) throw EmptyRegion("percentile of an empty set");
  std::sort(v.begin(), v.end());
  const double pos = p / 100.0 * static_cast<double>(v.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(pos));
  const auto hi = std::min(lo + 1, v.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return v[lo] + frac * (v[hi] - v[lo]);
}

/// sigma = median(|4-neighbour Laplacian|) / 0.6745 / sqrt(20), over
/// interior pixels.
inline double estimate_noise_sigma(const Slice& s) {
  if (s.nx() < 3 || s.ny() < 3) throw ShapeError("noise estimate needs at least 3x3");
  std::vector<double> lap;
  lap.reserve(static_cast<std::size_t>(s.nx() - 2) * static_cast<std::size_t>(s.ny() - 2));
  for (int y = 1; y < s.ny() - 1; ++y)
    for (int x = 1; x < s.nx() - 1; ++x) {
      const double l = static_cast<double>(s(x - 1, y)) + s(x + 1, y) + s(x, y - 1) + s(x, y + 1) - 4.0 * s(x, y);
      lap.push_back(std::abs(l));
    }
  const auto mid = lap.begin() + static_cast<std::ptrdiff_t>(lap.size() / 2);
  std::nth_element(lap.begin(), mid, lap.end());
  double med = *mid;
  if (lap.size() % 2 == 0) {
    const double below = *std::max_element(lap.begin(), mid);
    med = 0.5 * (med + below);
  }
  return med / 0.6745 / std::sqrt(20.0);
}

/// Non-local means with weights exp(-max(d2 - 2 sigma^2, 0) / h^2), d2 the
/// mean squared difference over the overlapping in-bounds patch pixels.
/// Each output is a convex combination of its search-window pixels.
inline Slice denoise_nlm(const Slice& s, double sigma, const NlmConfig& cfg = {}) {
  if (sigma <= 0.0) return s;
  const int nx = s.nx(), ny = s.ny();
  const int pr = cfg.patch_radius, sr = cfg.search_radius;
  const double h2 = (cfg.h_factor * sigma) * (cfg.h_factor * sigma);
  const double two_s2 = 2.0 * sigma * sigma;
  Slice out(nx, ny);
  for (int y = 0; y < ny; ++y)
    for (int x = 0; x < nx; ++x) {
      const double centre = s(x, y);
      double wsum = 0.0, acc = 0.0;
      for (int qy = std::max(0, y - sr); qy <= std::min(ny - 1, y + sr); ++qy)
        for (int qx = std::max(0, x - sr); qx <= std::min(nx - 1, x + sr); ++qx) {
          double d2 = 0.0;
          int n = 0;
          for (int dy = -pr; dy <= pr; ++dy)
            for (int dx = -pr; dx <= pr; ++dx) {
              const int ax = x + dx, ay = y + dy, bx = qx + dx, by = qy + dy;
              if (!s.in_bounds(ax, ay) || !s.in_bounds(bx, by)) continue;
              const double diff = static_cast<double>(s(ax, ay)) - s(bx, by);
              d2 += diff * diff;
              ++n;
            }
          d2 /= std::max(n, 1);
          const double w = std::exp(-std::max(d2 - two_s2, 0.0) / h2);
          wsum += w;
          acc += w * (static_cast<double>(s(qx, qy)) - centre);
        }
      out(x, y) = static_cast<float>(centre + acc / wsum);
    }
  return out;
}

namespace detail {
/// Continuous source index of target sample i (voxel-edge aligned grids).
inline double source_coord(int i, double src_spacing, double dst_spacing) {
  return (i + 0.5) * dst_spacing / src_spacing - 0.5;
}

inline int target_count(int n, double src_spacing, double dst_spacing) {
  return std::max(1, static_cast<int>(std::lround(n * src_spacing / dst_spacing)));
}

inline double interp_axis(double c, int n, int& i0, int& i1) {
  c = std::clamp(c, 0.0, static_cast<double>(n - 1));
  i0 = static_cast<int>(std::floor(c));
  i1 = std::min(i0 + 1, n - 1);
  return c - i0;
}
}  // namespace detail

/// In-plane bilinear reslice. Through-plane resampling (linear) only when
/// `allow_through_plane`; otherwise a differing z spacing throws SpacingError.
inline Volume reslice(const Volume& v, Spacing3 target, bool allow_through_plane = false) {
  const auto& d = v.dims();
  const auto& s = v.spacing();
  const bool same_z = std::abs(s.sz - target.sz) <= 1e-9 * target.sz;
  if (!same_z && !allow_through_plane)
    throw SpacingError("reslice: through-plane resampling required but disabled");
  if (s == target) return v;
  const Dims3 nd{detail::target_count(d.nx, s.sx, target.sx), detail::target_count(d.ny, s.sy, target.sy),
                 same_z ? d.nz : detail::target_count(d.nz, s.sz, target.sz)};
  const Spacing3 ns{target.sx, target.sy, same_z ? s.sz : target.sz};
  Volume out(nd, ns);
  for (int z = 0; z < nd.nz; ++z) {
    int z0 = z, z1 = z;
    double fz = 0.0;
    if (!same_z) fz = detail::interp_axis(detail::source_coord(z, s.sz, target.sz), d.nz, z0, z1);
    for (int y = 0; y < nd.ny; ++y) {
      int y0, y1;
      const double fy = detail::interp_axis(detail::source_coord(y, s.sy, target.sy), d.ny, y0, y1);
      for (int x = 0; x < nd.nx; ++x) {
        int x0, x1;
        const double fx = detail::interp_axis(detail::source_coord(x, s.sx, target.sx), d.nx, x0, x1);
        auto plane = [&](int zz) {
          const double a = (1 - fx) * v(x0, y0, zz) + fx * v(x1, y0, zz);
          const double b = (1 - fx) * v(x0, y1, zz) + fx * v(x1, y1, zz);
          return (1 - fy) * a + fy * b;
        };
        const double val = fz == 0.0 ? plane(z0) : (1 - fz) * plane(z0) + fz * plane(z1);
        out(x, y, z) = static_cast<float>(val);
      }
    }
  }
  return out;
}

/// Nearest-neighbour reslice of a mask onto the grid `reslice` would produce.
inline Mask reslice_mask(const Mask& m, Spacing3 target, bool allow_through_plane = false) {
  const auto& d = m.dims();
  const auto& s = m.spacing();
  const bool same_z = std::abs(s.sz - target.sz) <= 1e-9 * target.sz;
  if (!same_z && !allow_through_plane)
    throw SpacingError("reslice: through-plane resampling required but disabled");
  if (s == target) return m;
  const Dims3 nd{detail::target_count(d.nx, s.sx, target.sx), detail::target_count(d.ny, s.sy, target.sy),
                 same_z ? d.nz : detail::target_count(d.nz, s.sz, target.sz)};
  const Spacing3 ns{target.sx, target.sy, same_z ? s.sz : target.sz};
  auto nearest = [](int i, double src, double dst, int n) {
    const double c = detail::source_coord(i, src, dst);
    return std::clamp(static_cast<int>(std::lround(c)), 0, n - 1);
  };
  Mask out(nd, ns);
  for (int z = 0; z < nd.nz; ++z) {
    const int sz = same_z ? z : nearest(z, s.sz, target.sz, d.nz);
    for (int y = 0; y < nd.ny; ++y) {
      const int sy = nearest(y, s.sy, target.sy, d.ny);
      for (int x = 0; x < nd.nx; ++x) out(x, y, z) = m(nearest(x, s.sx, target.sx, d.nx), sy, sz);
    }
  }
  return out;
}

/// Affine map sending percentile p_lo of myocardium to 0 and percentile
/// p_hi of the blood pool to 255, clamped; zero outside the epicardium.
inline Slice normalize_slice(const Slice& s, const MaskSlice& myo, const MaskSlice& bloodpool,
                             const MaskSlice& epicardium, double p_lo = 1.0, double p_hi = 99.0) {
  const auto myo_vals = values_in(s, myo);
  const auto pool_vals = values_in(s, bloodpool);
  if (myo_vals.empty()) throw EmptyRegion("normalize: empty myocardium");
  if (pool_vals.empty()) throw EmptyRegion("normalize: empty blood pool");
  const double lo = percentile(myo_vals, p_lo);
  const double hi = percentile(pool_vals, p_hi);
  if (!(hi > lo)) throw DegenerateRange("normalize: reference range is empty (hi <= lo)");
  const double scale = 255.0 / (hi - lo);
  Slice out(s.nx(), s.ny(), 0.0f);
  for (std::size_t i = 0; i < s.size(); ++i)
    if (epicardium[i]) out[i] = static_cast<float>(std::clamp((s[i] - lo) * scale, 0.0, 255.0));
  return out;
}

/// out = 255 * (in / 255)^gamma.
inline Slice gamma_enhance(const Slice& s, double gamma) {
  Slice out = s;
  if (gamma == 1.0) return out;
  for (auto& v : out.raw()) {
    const double u = std::clamp(static_cast<double>(v), 0.0, 255.0) / 255.0;
    v = static_cast<float>(255.0 * std::pow(u, gamma));
  }
  return out;
}

/// Per-slice noise record of a preprocessing run.
struct PreprocessLog {
  std::vector<double> sigma;  // noise estimate per source slice
  std::vector<int> skipped;   // slices left at zero (no myocardium or blood pool)
};

/// denoise -> reslice (masks nearest-neighbour) -> per-slice normalize -> gamma.
inline LabeledCase preprocess_case(const LabeledCase& in, const PreprocessConfig& cfg, PreprocessLog* log = nullptr) {
  cfg.validate();
  Volume img = in.image;
  if (cfg.denoise) {
    for (int z = 0; z < img.dims().nz; ++z) {
      const Slice s = img.slice(z);
      const double sigma = estimate_noise_sigma(s);
      if (log) log->sigma.push_back(sigma);
      img.set_slice(z, denoise_nlm(s, sigma, cfg.nlm));
    }
  }
  LabeledCase out;
  out.case_id = in.case_id;
  out.image = reslice(img, cfg.target_spacing, cfg.allow_through_plane);
  auto rm = [&](const Mask& m) { return reslice_mask(m, cfg.target_spacing, cfg.allow_through_plane); };
  out.myocardium = rm(in.myocardium);
  out.endocardium = rm(in.endocardium);
  out.epicardium = rm(in.epicardium);
  if (in.gt_scar) out.gt_scar = rm(*in.gt_scar);
  if (in.gt_mvo) out.gt_mvo = rm(*in.gt_mvo);
  if (in.remote) out.remote = rm(*in.remote);
  if (out.image.dims().nz == in.image.dims().nz) out.slice_labels = in.slice_labels;

  for (int z = 0; z < out.image.dims().nz; ++z) {
    const MaskSlice myo = out.myocardium.slice(z);
    const MaskSlice pool = out.endocardium.slice(z);
    if (!any(myo) || !any(pool)) {
      out.image.set_slice(z, Slice(out.image.dims().nx, out.image.dims().ny, 0.0f));
      if (log) log->skipped.push_back(z);
      continue;
    }
    Slice s = normalize_slice(out.image.slice(z), myo, pool, out.epicardium.slice(z), cfg.p_lo, cfg.p_hi);
    out.image.set_slice(z, gamma_enhance(s, cfg.gamma));
  }
  return out;
}

}  // namespace lgeq::preprocess
