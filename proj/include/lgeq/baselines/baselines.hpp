#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "lgeq/core/case.hpp"
#include "lgeq/core/grid.hpp"
#include "lgeq/core/histogram.hpp"
#include "lgeq/core/regions.hpp"

namespace lgeq::baselines {

struct RemoteRegion {
  enum class Source { provided, automatic };
  MaskSlice mask;
  Source source = Source::automatic;
  double mean = 0, sd = 0;  // intensity statistics over the mask
};

struct Gmm2 {
  std::array<double, 2> weight{0.5, 0.5}, mean{0, 0}, sd{1, 1};  // component 0 is healthy (lower mean)
  std::vector<double> log_likelihood;
  bool converged = false;
};

namespace detail {

inline void mean_sd(const std::vector<double>& v, double& m, double& sd) {
  m = 0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double ss = 0;
  for (double x : v) ss += (x - m) * (x - m);
  sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
}

inline void check_aligned(const Slice& s, const MaskSlice& m) {
  if (!s.same_shape(m)) throw AlignmentError("slice and mask shapes differ");
}

}  // namespace detail

/// Statistics of `slice` over an explicit remote mask.
inline RemoteRegion remote_from_mask(const Slice& slice, const MaskSlice& remote,
                                     RemoteRegion::Source source = RemoteRegion::Source::provided) {
  detail::check_aligned(slice, remote);
  const auto v = values_in(slice, remote);
  if (v.empty()) throw EmptyRegion("remote region is empty");
  RemoteRegion r{remote, source, 0, 0};
  detail::mean_sd(v, r.mean, r.sd);
  return r;
}

/// Sector index 0..5 of pixel (x, y) about centre (cx, cy); sector k spans
/// [60k, 60k + 60) degrees, counter-clockwise from +x with y pointing down.
inline int sector_of(int x, int y, double cx, double cy) {
  double a = std::atan2(-(y - cy), x - cx) * 180.0 / std::numbers::pi;
  if (a < 0) a += 360.0;
  return std::min(5, static_cast<int>(a / 60.0));
}

/// Darkest of six angular myocardial sectors about the endocardial centroid
/// (myocardial centroid when the endocardium is empty). Ties go to the
/// lowest sector index.
inline RemoteRegion auto_remote_region(const Slice& slice, const MaskSlice& myo, const MaskSlice* endo = nullptr) {
  detail::check_aligned(slice, myo);
  if (!any(myo)) throw EmptyMask("auto_remote_region: empty myocardium");
  const auto [cx, cy] = (endo && any(*endo)) ? centroid(*endo) : centroid(myo);
  std::array<double, 6> sum{};
  std::array<std::size_t, 6> n{};
  for (int y = 0; y < myo.ny(); ++y)
    for (int x = 0; x < myo.nx(); ++x)
      if (myo(x, y)) {
        const auto k = static_cast<std::size_t>(sector_of(x, y, cx, cy));
        sum[k] += slice(x, y);
        ++n[k];
      }
  int best = -1;
  double best_mean = 0;
  for (int k = 0; k < 6; ++k) {
    if (n[static_cast<std::size_t>(k)] == 0) continue;
    const double m = sum[static_cast<std::size_t>(k)] / static_cast<double>(n[static_cast<std::size_t>(k)]);
    if (best < 0 || m < best_mean) {
      best = k;
      best_mean = m;
    }
  }
  MaskSlice remote(myo.nx(), myo.ny(), 0);
  for (int y = 0; y < myo.ny(); ++y)
    for (int x = 0; x < myo.nx(); ++x)
      if (myo(x, y) && sector_of(x, y, cx, cy) == best) remote(x, y) = 1;
  return remote_from_mask(slice, remote, RemoteRegion::Source::automatic);
}

/// Myocardial pixels strictly above `t`.
inline MaskSlice above(const Slice& slice, const MaskSlice& myo, double t, bool inclusive = false) {
  detail::check_aligned(slice, myo);
  MaskSlice out(myo.nx(), myo.ny(), 0);
  for (std::size_t i = 0; i < out.size(); ++i)
    if (myo[i] && (inclusive ? slice[i] >= t : slice[i] > t)) out[i] = 1;
  return out;
}

inline double nsd_threshold(const RemoteRegion& r, int n) { return r.mean + n * r.sd; }

inline MaskSlice nsd_segment(const Slice& slice, const MaskSlice& myo, const RemoteRegion& remote, int n) {
  if (n < 1) throw ConfigError("nsd_segment: n must be >= 1");
  if (!any(remote.mask)) throw EmptyRegion("nsd_segment: remote region is empty");
  return above(slice, myo, nsd_threshold(remote, n));
}

/// Half of the myocardial maximum, inclusive.
inline MaskSlice fwhm_segment(const Slice& slice, const MaskSlice& myo) {
  const auto v = values_in(slice, myo);
  if (v.empty()) throw EmptyMask("fwhm_segment: empty myocardium");
  return above(slice, myo, 0.5 * *std::max_element(v.begin(), v.end()), true);
}

inline double gmm_log_likelihood(const std::vector<double>& x, const Gmm2& g) {
  double ll = 0;
  const double c = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  for (double v : x) {
    double p = 0;
    for (std::size_t k = 0; k < 2; ++k) {
      const double z = (v - g.mean[k]) / g.sd[k];
      p += g.weight[k] * c / g.sd[k] * std::exp(-0.5 * z * z);
    }
    ll += std::log(std::max(p, 1e-300));
  }
  return ll;
}

/// Two-component 1-D EM, initialised from the Otsu split of the values.
inline Gmm2 gmm_fit(const std::vector<double>& x, double tol = 1e-6, int max_iter = 200) {
  if (x.size() < 10) throw DegenerateData("gmm_fit: need at least 10 samples");
  double m_all, sd_all;
  detail::mean_sd(x, m_all, sd_all);
  if (!(sd_all > 0)) throw DegenerateData("gmm_fit: zero variance");
  // Guards against a component collapsing onto a single value.
  const double sd_floor = 1e-3 * sd_all;

  std::vector<double> lo, hi;
  double split;
  try {
    split = otsu_threshold(Histogram::of(x)) + 0.5;
  } catch (const DegenerateHistogram&) {
    std::vector<double> s = x;
    std::nth_element(s.begin(), s.begin() + static_cast<std::ptrdiff_t>(s.size() / 2), s.end());
    split = s[s.size() / 2];
  }
  for (double v : x) (v < split ? lo : hi).push_back(v);
  if (lo.empty() || hi.empty()) {
    lo.clear();
    hi.clear();
    for (double v : x) (v <= m_all ? lo : hi).push_back(v);
  }
  Gmm2 g;
  for (auto [k, part] : {std::pair<std::size_t, const std::vector<double>*>{0, &lo}, {1, &hi}}) {
    double m, sd;
    detail::mean_sd(*part, m, sd);
    g.mean[k] = m;
    g.sd[k] = std::max(sd, sd_floor);
    g.weight[k] = static_cast<double>(part->size()) / static_cast<double>(x.size());
  }
  g.log_likelihood.push_back(gmm_log_likelihood(x, g));

  const double c = 1.0 / std::sqrt(2.0 * std::numbers::pi);
  std::vector<double> r0(x.size());
  for (int it = 0; it < max_iter; ++it) {
    for (std::size_t i = 0; i < x.size(); ++i) {
      std::array<double, 2> p{};
      for (std::size_t k = 0; k < 2; ++k) {
        const double z = (x[i] - g.mean[k]) / g.sd[k];
        p[k] = g.weight[k] * c / g.sd[k] * std::exp(-0.5 * z * z);
      }
      const double s = p[0] + p[1];
      r0[i] = s > 0 ? p[0] / s : (std::abs(x[i] - g.mean[0]) <= std::abs(x[i] - g.mean[1]) ? 1.0 : 0.0);
    }
    for (std::size_t k = 0; k < 2; ++k) {
      double nk = 0, sum = 0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = k == 0 ? r0[i] : 1.0 - r0[i];
        nk += r;
        sum += r * x[i];
      }
      if (nk <= 0) continue;  // keep the previous parameters of an empty component
      const double m = sum / nk;
      double ss = 0;
      for (std::size_t i = 0; i < x.size(); ++i) {
        const double r = k == 0 ? r0[i] : 1.0 - r0[i];
        ss += r * (x[i] - m) * (x[i] - m);
      }
      g.mean[k] = m;
      g.sd[k] = std::max(std::sqrt(ss / nk), sd_floor);
      g.weight[k] = nk / static_cast<double>(x.size());
    }
    g.log_likelihood.push_back(gmm_log_likelihood(x, g));
    const auto n = g.log_likelihood.size();
    if (std::abs(g.log_likelihood[n - 1] - g.log_likelihood[n - 2]) < tol) {
      g.converged = true;
      break;
    }
  }
  if (g.mean[0] > g.mean[1]) {
    std::swap(g.mean[0], g.mean[1]);
    std::swap(g.sd[0], g.sd[1]);
    std::swap(g.weight[0], g.weight[1]);
  }
  return g;
}

inline double gmm_threshold(const Gmm2& g) { return g.mean[0] + 2.0 * g.sd[0]; }

inline MaskSlice gmm_segment(const Slice& slice, const MaskSlice& myo, const Gmm2& g) {
  return above(slice, myo, gmm_threshold(g));
}

/// Otsu on the myocardial histogram of the preprocessed slice.
inline MaskSlice otsu_segment(const Slice& slice, const MaskSlice& myo) {
  detail::check_aligned(slice, myo);
  if (!any(myo)) throw EmptyMask("otsu_segment: empty myocardium");
  const int t = otsu_threshold(Histogram::of(slice, myo));
  MaskSlice out(myo.nx(), myo.ny(), 0);
  for (std::size_t i = 0; i < out.size(); ++i)
    if (myo[i] && std::clamp(std::lround(slice[i]), 0L, 255L) > t) out[i] = 1;
  return out;
}

// ---- whole-case runner ----------------------------------------------------

/// The nine comparison methods in report order.
inline const std::vector<std::string>& method_names() {
  static const std::vector<std::string> names{"1sd", "2sd", "3sd", "4sd", "5sd", "6sd", "otsu", "fwhm", "gmm"};
  return names;
}

struct BaselineOutput {
  std::vector<Mask> masks;            // one per method, in method_names() order
  std::vector<std::string> warnings;  // "slice <z> <method>: <reason>"
  bool remote_auto = false;
};

/// Runs every method slice by slice. Slices without myocardium give empty
/// masks; a per-slice failure is recorded as a warning with an empty mask.
inline BaselineOutput run_all(const LabeledCase& c) {
  const auto& img = c.image;
  const auto& d = img.dims();
  BaselineOutput out;
  out.masks.assign(method_names().size(), Mask(d, img.spacing(), 0));
  for (int z = 0; z < d.nz; ++z) {
    const Slice s = img.slice(z);
    const MaskSlice myo = c.myocardium.slice(z);
    if (!any(myo)) continue;
    const MaskSlice endo = c.endocardium.slice(z);
    auto warn = [&](const std::string& method, const std::exception& e) {
      out.warnings.push_back("slice " + std::to_string(z) + " " + method + ": " + e.what());
    };

    std::optional<RemoteRegion> remote;
    try {
      const MaskSlice given = c.remote ? c.remote->slice(z) : MaskSlice(d.nx, d.ny, 0);
      if (any(given)) {
        remote = remote_from_mask(s, given);
      } else {
        remote = auto_remote_region(s, myo, &endo);
        out.remote_auto = true;
      }
    } catch (const Error& e) {
      warn("remote", e);
    }
    if (remote)
      for (int n = 1; n <= 6; ++n) out.masks[static_cast<std::size_t>(n - 1)].set_slice(z, nsd_segment(s, myo, *remote, n));
    try {
      out.masks[6].set_slice(z, otsu_segment(s, myo));
    } catch (const Error& e) {
      warn("otsu", e);
    }
    out.masks[7].set_slice(z, fwhm_segment(s, myo));
    try {
      const auto v = values_in(s, myo);
      out.masks[8].set_slice(z, gmm_segment(s, myo, gmm_fit(v)));
    } catch (const Error& e) {
      warn("gmm", e);
    }
  }
  return out;
}

}  // namespace lgeq::baselines
