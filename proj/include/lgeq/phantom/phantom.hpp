#pragma once

// Synthetic LGE-like cases: an annular myocardium per slice around a bright
// blood pool, an optional endocardium-adjacent hyper-enhanced scar sector
// and an optional dark MVO core enclosed by scar and blood pool.
// Healthy myocardium is Rayleigh-distributed, scar Gaussian.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <numbers>
#include <string>
#include <vector>

#include "lgeq/core/case.hpp"
#include "lgeq/core/regions.hpp"
#include "lgeq/core/rng.hpp"

namespace lgeq::phantom {

struct IntensityModel {
  double healthy_sigma = 40.0;  // Rayleigh scale
  double scar_mean = 180.0;
  double scar_sd = 25.0;
  double blood_mean = 200.0;
  double blood_sd = 20.0;
  double mvo_mean = 50.0;
  double mvo_sd = 15.0;
  double background_sigma = 30.0;  // Rayleigh scale outside the epicardium
};

struct PhantomSpec {
  Dims3 dims{96, 96, 6};
  Spacing3 spacing{1.25, 1.25, 8.0};
  double inner_radius_mm = 20.0;
  double outer_radius_mm = 30.0;
  double radius_taper = 0.06;      // fractional radius shrink from base to apex
  double center_jitter_mm = 1.5;   // per-slice uniform jitter of the ring centre
  bool diseased = false;
  bool scar = false;
  double scar_extent_deg = 100.0;
  double scar_center_deg = -1.0;   // < 0: drawn at random
  double transmural_fraction = 0.6;
  int scar_first_slice = 0;
  int scar_last_slice = -1;        // < 0: last slice
  bool mvo = false;
  double mvo_fraction = 0.2;       // fraction of scar area
  IntensityModel intensity;
  double blur_sigma_px = 0.7;      // partial-volume blur of the intensity image
  std::uint64_t seed = 0;

  void validate() const {
    if (dims.nx < 8 || dims.ny < 8 || dims.nz < 1) throw SpecError("phantom: dims too small");
    if (!(spacing.sx > 0 && spacing.sy > 0 && spacing.sz > 0)) throw SpecError("phantom: spacing must be > 0");
    if (!(inner_radius_mm > 0 && inner_radius_mm < outer_radius_mm))
      throw SpecError("phantom: need 0 < inner radius < outer radius");
    if (scar && !diseased) throw SpecError("phantom: scar requires the diseased flag");
    if (mvo && !scar) throw SpecError("phantom: mvo requires a scar");
    if (scar && !(transmural_fraction > 0 && transmural_fraction <= 1))
      throw SpecError("phantom: transmural fraction must be in (0, 1]");
    if (scar && !(scar_extent_deg > 0 && scar_extent_deg <= 360)) throw SpecError("phantom: bad scar extent");
    if (mvo && !(mvo_fraction > 0 && mvo_fraction < 1)) throw SpecError("phantom: mvo fraction must be in (0, 1)");
    if (!(intensity.scar_mean > intensity.healthy_sigma))
      throw SpecError("phantom: scar mean must lie above the healthy mode");
    if (!(intensity.healthy_sigma > 0 && intensity.scar_sd >= 0 && blur_sigma_px >= 0))
      throw SpecError("phantom: bad intensity model");
  }
};

namespace detail {

inline double wrap_deg(double a) {
  a = std::fmod(a, 360.0);
  return a < 0 ? a + 360.0 : a;
}

/// Smallest absolute angular difference in degrees.
inline double angle_diff(double a, double b) {
  const double d = std::abs(wrap_deg(a) - wrap_deg(b));
  return std::min(d, 360.0 - d);
}

inline Slice gaussian_blur(const Slice& s, double sigma) {
  if (sigma <= 0) return s;
  const int r = std::max(1, static_cast<int>(std::ceil(3.0 * sigma)));
  std::vector<double> k(static_cast<std::size_t>(2 * r + 1));
  double sum = 0;
  for (int i = -r; i <= r; ++i) sum += k[static_cast<std::size_t>(i + r)] = std::exp(-0.5 * i * i / (sigma * sigma));
  for (auto& v : k) v /= sum;
  auto pass = [&](const Slice& in, bool horizontal) {
    Slice out(in.nx(), in.ny());
    for (int y = 0; y < in.ny(); ++y)
      for (int x = 0; x < in.nx(); ++x) {
        double acc = 0, wsum = 0;
        for (int i = -r; i <= r; ++i) {
          const int qx = horizontal ? x + i : x, qy = horizontal ? y : y + i;
          if (!in.in_bounds(qx, qy)) continue;
          const double w = k[static_cast<std::size_t>(i + r)];
          acc += w * in(qx, qy);
          wsum += w;
        }
        out(x, y) = static_cast<float>(acc / wsum);
      }
    return out;
  };
  return pass(pass(s, true), false);
}

}  // namespace detail

/// Generates one labeled case; deterministic in (spec, seed).
inline LabeledCase generate_case(const PhantomSpec& spec, std::uint64_t seed, std::string case_id = "phantom") {
  spec.validate();
  Rng rng(seed);
  const auto& d = spec.dims;
  const auto& sp = spec.spacing;
  LabeledCase c;
  c.case_id = std::move(case_id);
  c.image = Volume(d, sp, 0.0f);
  c.myocardium = Mask(d, sp, 0);
  c.endocardium = Mask(d, sp, 0);
  c.epicardium = Mask(d, sp, 0);
  Mask scar(d, sp, 0), mvo(d, sp, 0);

  const double scar_center = spec.scar_center_deg >= 0 ? spec.scar_center_deg : rng.uniform(0.0, 360.0);
  const int last = spec.scar_last_slice < 0 ? d.nz - 1 : std::min(spec.scar_last_slice, d.nz - 1);
  const double px = sp.sx;  // radii are converted using the in-plane x spacing

  for (int z = 0; z < d.nz; ++z) {
    const double taper = d.nz > 1 ? 1.0 - spec.radius_taper * z / (d.nz - 1) : 1.0;
    const double r_in = spec.inner_radius_mm * taper;
    const double r_out = spec.outer_radius_mm * taper;
    const double cx = 0.5 * (d.nx - 1) * sp.sx + rng.uniform(-spec.center_jitter_mm, spec.center_jitter_mm);
    const double cy = 0.5 * (d.ny - 1) * sp.sy + rng.uniform(-spec.center_jitter_mm, spec.center_jitter_mm);
    const bool scar_here = spec.scar && z >= spec.scar_first_slice && z <= last;

    const double wall = r_out - r_in;
    const double scar_depth = spec.transmural_fraction * wall;
    const double half_extent = 0.5 * spec.scar_extent_deg;
    // MVO: central part of the sector, adjacent to the blood pool, kept at
    // least ~2 px inside the scar radially and angularly.
    double mvo_depth = 0, mvo_half = 0;
    if (scar_here && spec.mvo) {
      const double margin_mm = 2.0 * px;
      mvo_depth = std::max(0.0, std::min(0.5 * scar_depth, scar_depth - margin_mm));
      const double depth_frac = scar_depth > 0 ? mvo_depth / scar_depth : 0.0;
      const double wanted_half = depth_frac > 0 ? half_extent * spec.mvo_fraction / depth_frac : 0.0;
      const double margin_deg = margin_mm / (r_in + scar_depth) * 180.0 / std::numbers::pi;
      mvo_half = spec.scar_extent_deg >= 360.0 ? wanted_half : std::max(0.0, std::min(wanted_half, half_extent - margin_deg));
    }

    for (int y = 0; y < d.ny; ++y)
      for (int x = 0; x < d.nx; ++x) {
        const double dx = x * sp.sx - cx, dy = y * sp.sy - cy;
        const double r = std::hypot(dx, dy);
        if (r <= r_out) c.epicardium(x, y, z) = 1;
        if (r < r_in) {
          c.endocardium(x, y, z) = 1;
          continue;
        }
        if (r > r_out) continue;
        c.myocardium(x, y, z) = 1;
        if (!scar_here) continue;
        const double ang = detail::wrap_deg(std::atan2(-dy, dx) * 180.0 / std::numbers::pi);
        const double off = detail::angle_diff(ang, scar_center);
        if (off > half_extent || r - r_in > scar_depth) continue;
        if (spec.mvo && off <= mvo_half && r - r_in <= mvo_depth)
          mvo(x, y, z) = 1;
        else
          scar(x, y, z) = 1;
      }
  }

  // Keep only MVO pixels enclosed by scar + blood pool (4-connected holes).
  if (spec.mvo) {
    for (int z = 0; z < d.nz; ++z) {
      const MaskSlice u = mask_or(scar.slice(z), c.endocardium.slice(z));
      const MaskSlice enclosed = fill_holes_2d(u, Connectivity::four);
      MaskSlice m = mvo.slice(z);
      MaskSlice s = scar.slice(z);
      for (std::size_t i = 0; i < m.size(); ++i)
        if (m[i] && !enclosed[i]) {
          m[i] = 0;
          s[i] = 1;
        }
      mvo.set_slice(z, m);
      scar.set_slice(z, s);
    }
  }

  const auto& im = spec.intensity;
  for (int z = 0; z < d.nz; ++z) {
    Slice s(d.nx, d.ny);
    for (int y = 0; y < d.ny; ++y)
      for (int x = 0; x < d.nx; ++x) {
        double v;
        if (mvo(x, y, z))
          v = rng.normal(im.mvo_mean, im.mvo_sd);
        else if (scar(x, y, z))
          v = rng.normal(im.scar_mean, im.scar_sd);
        else if (c.myocardium(x, y, z))
          v = rng.rayleigh(im.healthy_sigma);
        else if (c.endocardium(x, y, z))
          v = rng.normal(im.blood_mean, im.blood_sd);
        else
          v = rng.rayleigh(im.background_sigma);
        s(x, y) = static_cast<float>(std::max(0.0, v));
      }
    c.image.set_slice(z, detail::gaussian_blur(s, spec.blur_sigma_px));
  }

  c.gt_scar = scar;
  if (spec.mvo) c.gt_mvo = mvo;
  c.slice_labels = c.labels_or_derived();
  return c;
}

/// Ranges of per-case anatomical and contrast variation for corpora.
struct Variation {
  double inner_radius_mm[2] = {16.0, 24.0};
  double wall_mm[2] = {7.0, 12.0};
  double scar_extent_deg[2] = {50.0, 130.0};
  double transmural[2] = {0.4, 1.0};
  double healthy_sigma[2] = {32.0, 48.0};
  double scar_mean[2] = {160.0, 200.0};
};

/// `base` with ring geometry, scar size and tissue contrast drawn from `v`.
/// Disease flags are set from the arguments; everything else is kept.
inline PhantomSpec sample_spec(const PhantomSpec& base, Rng& rng, bool diseased, bool mvo, const Variation& v = {}) {
  PhantomSpec s = base;
  s.inner_radius_mm = rng.uniform(v.inner_radius_mm[0], v.inner_radius_mm[1]);
  s.outer_radius_mm = s.inner_radius_mm + rng.uniform(v.wall_mm[0], v.wall_mm[1]);
  s.scar_extent_deg = rng.uniform(v.scar_extent_deg[0], v.scar_extent_deg[1]);
  s.transmural_fraction = rng.uniform(v.transmural[0], v.transmural[1]);
  s.intensity.healthy_sigma = rng.uniform(v.healthy_sigma[0], v.healthy_sigma[1]);
  s.intensity.scar_mean = rng.uniform(v.scar_mean[0], v.scar_mean[1]);
  s.diseased = s.scar = diseased;
  s.mvo = diseased && mvo;
  return s;
}

/// `n` cases named <prefix><index>; case i is diseased iff i is odd when
/// `balanced`, else always; MVO on diseased cases with probability
/// `mvo_rate`. Case specs and seeds derive from `seed` only.
inline std::vector<LabeledCase> generate_corpus(const PhantomSpec& base, int n, std::uint64_t seed, bool balanced,
                                                double mvo_rate = 0.0, bool vary = true, const std::string& prefix = "case") {
  if (n < 1) throw SpecError("phantom: corpus size must be >= 1");
  std::vector<LabeledCase> out;
  out.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(i)));
    const bool diseased = balanced ? (i % 2 == 1) : true;
    const bool mvo = diseased && rng.bernoulli(mvo_rate);
    PhantomSpec s = base;
    if (vary) {
      s = sample_spec(base, rng, diseased, mvo);
    } else {
      s.diseased = s.scar = diseased;
      s.mvo = mvo;
    }
    char id[32];
    std::snprintf(id, sizeof id, "%03d", i);
    out.push_back(generate_case(s, derive_seed(seed, 100000 + static_cast<std::uint64_t>(i)), prefix + id));
  }
  return out;
}

}  // namespace lgeq::phantom
