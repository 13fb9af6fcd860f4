#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "lgeq/core/error.hpp"
#include "lgeq/core/grid.hpp"

namespace lgeq::metrics {

struct ConfusionCounts {
  std::uint64_t tp = 0, fp = 0, tn = 0, fn = 0;
  std::uint64_t total() const { return tp + fp + tn + fn; }
};

struct AgreementStats {
  double bias_mean = 0, bias_sd = 0;
  double rho = 0;
  double p_value = 1;
  std::string test;
};

// ---- overlap ------------------------------------------------------------

/// 2|A and B| / (|A| + |B|); two empty masks agree perfectly.
template <class M>
double dice(const M& a, const M& b) {
  if (a.raw().size() != b.raw().size()) throw AlignmentError("dice: mask shapes differ");
  std::size_t na = 0, nb = 0, both = 0;
  for (std::size_t i = 0; i < a.raw().size(); ++i) {
    const bool x = a.raw()[i] != 0, y = b.raw()[i] != 0;
    na += x;
    nb += y;
    both += x && y;
  }
  if (na + nb == 0) return 1.0;
  return 2.0 * static_cast<double>(both) / static_cast<double>(na + nb);
}

// ---- Hausdorff ----------------------------------------------------------

namespace detail {

struct Vox {
  int x, y, z;
};

inline std::vector<Vox> voxels_of(const Mask& m) {
  std::vector<Vox> v;
  const auto& d = m.dims();
  for (int z = 0; z < d.nz; ++z)
    for (int y = 0; y < d.ny; ++y)
      for (int x = 0; x < d.nx; ++x)
        if (m(x, y, z)) v.push_back({x, y, z});
  return v;
}

inline double sq_dist(const Vox& a, const Vox& b, const Spacing3& s) {
  const double dx = (a.x - b.x) * s.sx, dy = (a.y - b.y) * s.sy, dz = (a.z - b.z) * s.sz;
  return dx * dx + dy * dy + dz * dz;
}

/// max over a of min over b, squared, by exhaustive search.
inline double directed_sq_brute(const std::vector<Vox>& a, const std::vector<Vox>& b, const Spacing3& s) {
  double worst = 0.0;
  for (const auto& p : a) {
    double best = std::numeric_limits<double>::infinity();
    for (const auto& q : b) best = std::min(best, sq_dist(p, q, s));
    worst = std::max(worst, best);
  }
  return worst;
}

/// Lower envelope of parabolas s^2 (p - q)^2 + f(q) over finite f (in place).
inline void edt_1d(std::vector<double>& f, double s, std::vector<int>& v, std::vector<double>& z,
                   std::vector<double>& out) {
  const int n = static_cast<int>(f.size());
  constexpr double inf = std::numeric_limits<double>::infinity();
  v.assign(static_cast<std::size_t>(n), 0);
  z.assign(static_cast<std::size_t>(n) + 1, 0.0);
  out.assign(static_cast<std::size_t>(n), inf);
  const double s2 = s * s;
  int k = -1;
  for (int q = 0; q < n; ++q) {
    if (!std::isfinite(f[static_cast<std::size_t>(q)])) continue;
    double inter = -inf;
    while (k >= 0) {
      const int r = v[static_cast<std::size_t>(k)];
      inter = ((f[static_cast<std::size_t>(q)] + s2 * q * q) - (f[static_cast<std::size_t>(r)] + s2 * r * r)) /
              (2.0 * s2 * (q - r));
      if (inter <= z[static_cast<std::size_t>(k)])
        --k;
      else
        break;
    }
    ++k;
    v[static_cast<std::size_t>(k)] = q;
    z[static_cast<std::size_t>(k)] = k == 0 ? -inf : inter;
    z[static_cast<std::size_t>(k) + 1] = inf;
  }
  if (k < 0) return;
  int j = 0;
  for (int p = 0; p < n; ++p) {
    while (z[static_cast<std::size_t>(j) + 1] < p) ++j;
    const int r = v[static_cast<std::size_t>(j)];
    const double d = (p - r) * s;
    out[static_cast<std::size_t>(p)] = d * d + f[static_cast<std::size_t>(r)];
  }
}

/// Squared physical distance from every voxel to the nearest foreground voxel.
inline std::vector<double> squared_edt(const Mask& m) {
  const auto& d = m.dims();
  const auto& s = m.spacing();
  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> g(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) g[i] = m[i] ? 0.0 : inf;
  std::vector<double> line, out, zz;
  std::vector<int> vv;
  auto pass = [&](int len, double sp, auto idx, int outer1, int outer2) {
    for (int a = 0; a < outer1; ++a)
      for (int b = 0; b < outer2; ++b) {
        line.resize(static_cast<std::size_t>(len));
        for (int t = 0; t < len; ++t) line[static_cast<std::size_t>(t)] = g[idx(t, a, b)];
        edt_1d(line, sp, vv, zz, out);
        for (int t = 0; t < len; ++t) g[idx(t, a, b)] = out[static_cast<std::size_t>(t)];
      }
  };
  pass(d.nx, s.sx, [&](int t, int a, int b) { return m.index(t, a, b); }, d.ny, d.nz);
  pass(d.ny, s.sy, [&](int t, int a, int b) { return m.index(a, t, b); }, d.nx, d.nz);
  pass(d.nz, s.sz, [&](int t, int a, int b) { return m.index(a, b, t); }, d.nx, d.ny);
  return g;
}

inline double directed_sq_edt(const Mask& from, const Mask& to) {
  const auto dt = squared_edt(to);
  double worst = 0.0;
  for (std::size_t i = 0; i < from.size(); ++i)
    if (from[i]) worst = std::max(worst, dt[i]);
  return worst;
}

}  // namespace detail

/// Pair-count limit below which the exhaustive search is used.
inline constexpr std::size_t kHausdorffBruteLimit = 50000;

/// Symmetric Hausdorff distance in mm between two non-empty masks.
inline double hausdorff3d(const Mask& a, const Mask& b) {
  if (!a.same_geometry(b)) throw AlignmentError("hausdorff3d: mask geometry differs");
  const auto va = detail::voxels_of(a), vb = detail::voxels_of(b);
  if (va.empty() || vb.empty()) throw EmptyMask("hausdorff3d: undefined for an empty mask");
  double sq;
  if (va.size() * vb.size() <= kHausdorffBruteLimit) {
    sq = std::max(detail::directed_sq_brute(va, vb, a.spacing()), detail::directed_sq_brute(vb, va, a.spacing()));
  } else {
    sq = std::max(detail::directed_sq_edt(a, b), detail::directed_sq_edt(b, a));
  }
  return std::sqrt(sq);
}

/// Distance-transform path regardless of size (exposed for cross-checking).
inline double hausdorff3d_edt(const Mask& a, const Mask& b) {
  if (!a.same_geometry(b)) throw AlignmentError("hausdorff3d: mask geometry differs");
  if (!any(a) || !any(b)) throw EmptyMask("hausdorff3d: undefined for an empty mask");
  return std::sqrt(std::max(detail::directed_sq_edt(a, b), detail::directed_sq_edt(b, a)));
}

// ---- clinical markers ---------------------------------------------------

inline double scar_volume_cm3(std::size_t voxels, const Spacing3& s) {
  return static_cast<double>(voxels) * s.voxel_volume_mm3() / 1000.0;
}
inline double scar_volume_cm3(const Mask& m) { return scar_volume_cm3(count_nonzero(m), m.spacing()); }

inline double percent_infarct(const Mask& scar, const Mask& myo) {
  if (!scar.same_geometry(myo)) throw AlignmentError("percent_infarct: mask geometry differs");
  const auto nm = count_nonzero(myo);
  if (nm == 0) throw DivisionByZero("percent_infarct: empty myocardium");
  return 100.0 * static_cast<double>(count_nonzero(scar)) / static_cast<double>(nm);
}

// ---- descriptive helpers ------------------------------------------------

inline double mean(std::span<const double> v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

/// Sample standard deviation (n - 1).
inline double sample_sd(std::span<const double> v) {
  if (v.size() < 2) throw DegenerateData("sample_sd: need at least two values");
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

/// Mean and SD of y - x.
inline std::pair<double, double> bland_altman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw LengthMismatch("bland_altman: series lengths differ");
  if (x.size() < 2) throw LengthMismatch("bland_altman: need at least two pairs");
  std::vector<double> d(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) d[i] = y[i] - x[i];
  return {mean(d), sample_sd(d)};
}

/// 1-based ranks, ties receive the average of the ranks they span.
inline std::vector<double> average_ranks(std::span<const double> v) {
  std::vector<std::size_t> idx(v.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::stable_sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return v[a] < v[b]; });
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < idx.size();) {
    std::size_t j = i;
    while (j + 1 < idx.size() && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) r[idx[k]] = avg;
    i = j + 1;
  }
  return r;
}

inline double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw LengthMismatch("pearson: series lengths differ");
  const double mx = mean(x), my = mean(y);
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0 || syy == 0) throw ZeroVariance("pearson: constant series");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

inline double spearman(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw LengthMismatch("spearman: series lengths differ");
  if (x.size() < 3) throw LengthMismatch("spearman: need at least three pairs");
  const auto rx = average_ranks(x), ry = average_ranks(y);
  return pearson(rx, ry);
}

// ---- hypothesis tests ---------------------------------------------------

struct TestResult {
  double statistic = 0;
  double p_value = 1;
};

/// U counts pairs with x > y plus half of the ties. Two-tailed p from the
/// tie-corrected normal approximation with continuity correction.
inline TestResult mann_whitney_u(std::span<const double> x, std::span<const double> y) {
  if (x.size() < 2 || y.size() < 2) throw DegenerateData("mann_whitney_u: both samples need >= 2 values");
  std::vector<double> all(x.begin(), x.end());
  all.insert(all.end(), y.begin(), y.end());
  const auto r = average_ranks(all);
  const double n1 = static_cast<double>(x.size()), n2 = static_cast<double>(y.size()), n = n1 + n2;
  double r1 = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) r1 += r[i];
  const double u = r1 - n1 * (n1 + 1) / 2.0;

  std::vector<double> sorted = all;
  std::sort(sorted.begin(), sorted.end());
  double tie_term = 0.0;
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    const double t = static_cast<double>(j - i);
    tie_term += t * t * t - t;
    i = j;
  }
  const double var = n1 * n2 / 12.0 * ((n + 1) - tie_term / (n * (n - 1)));
  if (var <= 0) return {u, 1.0};
  const double z = std::max(0.0, std::abs(u - n1 * n2 / 2.0) - 0.5) / std::sqrt(var);
  return {u, std::min(1.0, std::erfc(z / std::sqrt(2.0)))};
}

namespace detail {

/// Continued fraction for the incomplete beta (modified Lentz).
inline double beta_cf(double a, double b, double x) {
  constexpr double tiny = 1e-300, eps = 1e-16;
  double c = 1.0, d = 1.0 - (a + b) * x / (a + 1.0);
  if (std::abs(d) < tiny) d = tiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m <= 10000; ++m) {
    const double m2 = 2.0 * m;
    double aa = m * (b - m) * x / ((a + m2 - 1) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (a + b + m) * x / ((a + m2) * (a + m2 + 1));
    d = 1.0 + aa * d;
    if (std::abs(d) < tiny) d = tiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < tiny) c = tiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < eps) return h;
  }
  throw DivergenceError("incomplete beta: continued fraction did not converge");
}

}  // namespace detail

/// Regularized incomplete beta I_x(a, b).
inline double incomplete_beta(double a, double b, double x) {
  if (x <= 0) return 0.0;
  if (x >= 1) return 1.0;
  const double ln_front = std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x);
  const double front = std::exp(ln_front);
  if (x < (a + 1) / (a + b + 2)) return front * detail::beta_cf(a, b, x) / a;
  return 1.0 - front * detail::beta_cf(b, a, 1.0 - x) / b;
}

/// Two-tailed tail probability of Student's t with `dof` degrees of freedom.
inline double student_t_two_tailed(double t, double dof) {
  return incomplete_beta(0.5 * dof, 0.5, dof / (dof + t * t));
}

/// Paired t test on d = y - x.
inline TestResult paired_t(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw LengthMismatch("paired_t: series lengths differ");
  if (x.size() < 2) throw LengthMismatch("paired_t: need at least two pairs");
  std::vector<double> d(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) d[i] = y[i] - x[i];
  const double sd = sample_sd(d);
  if (!(sd > 0)) throw ZeroVariance("paired_t: differences have zero variance");
  const double n = static_cast<double>(d.size());
  const double t = mean(d) / (sd / std::sqrt(n));
  return {t, student_t_two_tailed(t, n - 1)};
}

// ---- classification rates -----------------------------------------------

struct Rates {
  double sensitivity, specificity, accuracy;
};

inline Rates sens_spec_acc(const ConfusionCounts& c) {
  if (c.tp + c.fn == 0 || c.tn + c.fp == 0) throw EmptyDenominator("sens_spec_acc: a class has no samples");
  return {static_cast<double>(c.tp) / static_cast<double>(c.tp + c.fn),
          static_cast<double>(c.tn) / static_cast<double>(c.tn + c.fp),
          static_cast<double>(c.tp + c.tn) / static_cast<double>(c.total())};
}

/// |pred and gt| / |gt|.
template <class M>
double mvo_sensitivity(const M& pred, const M& gt_mvo) {
  const auto n = count_nonzero(gt_mvo);
  if (n == 0) throw EmptyDenominator("mvo_sensitivity: ground truth is empty");
  return static_cast<double>(count_nonzero(mask_and(pred, gt_mvo))) / static_cast<double>(n);
}

// ---- ROC ----------------------------------------------------------------

struct RocPoint {
  double threshold, fpr, tpr;
};

/// Operating points for "score >= threshold" at every distinct score,
/// from (0, 0) to (1, 1). Labels are 1 (positive) and 0.
inline std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) throw LengthMismatch("roc_curve: lengths differ");
  std::size_t np = 0, nn = 0;
  for (int l : labels) {
    if (l == 1)
      ++np;
    else if (l == 0)
      ++nn;
    else
      throw ConfigError("roc_curve: labels must be 0 or 1");
  }
  if (np == 0 || nn == 0) throw SingleClassError("roc_curve: both classes required");
  std::vector<std::size_t> idx(scores.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  std::vector<RocPoint> pts{{std::numeric_limits<double>::infinity(), 0.0, 0.0}};
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = 0; i < idx.size();) {
    const double s = scores[idx[i]];
    while (i < idx.size() && scores[idx[i]] == s) {
      (labels[idx[i]] == 1 ? tp : fp)++;
      ++i;
    }
    pts.push_back({s, static_cast<double>(fp) / static_cast<double>(nn), static_cast<double>(tp) / static_cast<double>(np)});
  }
  return pts;
}

/// Trapezoidal area under the ROC curve.
inline double auc(const std::vector<RocPoint>& roc) {
  double a = 0.0;
  for (std::size_t i = 1; i < roc.size(); ++i)
    a += (roc[i].fpr - roc[i - 1].fpr) * (roc[i].tpr + roc[i - 1].tpr) * 0.5;
  return a;
}

inline double auc(std::span<const double> scores, std::span<const int> labels) {
  return auc(roc_curve(scores, labels));
}

}  // namespace lgeq::metrics
