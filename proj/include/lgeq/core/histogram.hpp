#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>

#include "lgeq/core/grid.hpp"

namespace lgeq {

/// 256 counts over intensity levels 0..255.
struct Histogram {
  std::array<std::uint64_t, 256> bins{};

  std::uint64_t total() const { return std::accumulate(bins.begin(), bins.end(), std::uint64_t{0}); }

  /// Values are rounded to the nearest level and clamped to [0, 255].
  void add(double v) {
    const long level = std::lround(v);
    bins[static_cast<std::size_t>(std::clamp(level, 0L, 255L))] += 1;
  }

  template <class I, class M>
  static Histogram of(const I& img, const M& mask) {
    if (img.raw().size() != mask.raw().size()) throw AlignmentError("histogram: image and mask shapes differ");
    Histogram h;
    for (std::size_t i = 0; i < mask.raw().size(); ++i)
      if (mask.raw()[i]) h.add(static_cast<double>(img.raw()[i]));
    return h;
  }

  static Histogram of(std::span<const double> values) {
    Histogram h;
    for (double v : values) h.add(v);
    return h;
  }
};

/// Otsu threshold: the level t maximising w0*w1*(mu0-mu1)^2 over the split
/// {<= t} | {> t}; ties go to the smaller t. Class statistics are accumulated
/// in exact integer arithmetic so equal splits give bit-identical scores.
inline int otsu_threshold(const Histogram& h) {
  const std::uint64_t total = h.total();
  int occupied = 0;
  std::uint64_t weighted_total = 0;
  for (int i = 0; i < 256; ++i) {
    if (h.bins[static_cast<std::size_t>(i)]) ++occupied;
    weighted_total += static_cast<std::uint64_t>(i) * h.bins[static_cast<std::size_t>(i)];
  }
  if (total < 2 || occupied < 2) throw DegenerateHistogram("otsu: fewer than two occupied levels");

  const double n = static_cast<double>(total);
  std::uint64_t n0 = 0, s0 = 0;
  double best = -1.0;
  int best_t = 0;
  for (int t = 0; t < 255; ++t) {
    n0 += h.bins[static_cast<std::size_t>(t)];
    s0 += static_cast<std::uint64_t>(t) * h.bins[static_cast<std::size_t>(t)];
    const std::uint64_t n1 = total - n0;
    if (n0 == 0 || n1 == 0) continue;
    const double w0 = static_cast<double>(n0) / n;
    const double w1 = static_cast<double>(n1) / n;
    const double mu0 = static_cast<double>(s0) / static_cast<double>(n0);
    const double mu1 = static_cast<double>(weighted_total - s0) / static_cast<double>(n1);
    const double var = w0 * w1 * (mu0 - mu1) * (mu0 - mu1);
    if (var > best) {
      best = var;
      best_t = t;
    }
  }
  return best_t;
}

}  // namespace lgeq
