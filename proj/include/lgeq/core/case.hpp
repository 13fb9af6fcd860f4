#pragma once

#include <optional>
#include <string>
#include <vector>

#include "lgeq/core/grid.hpp"

namespace lgeq {

enum class SliceLabel { healthy = 0, diseased = 1 };

/// An image volume with aligned masks and optional ground truth.
/// Convention: `gt_scar` holds the hyper-enhanced region only and is
/// disjoint from `gt_mvo`; the full infarct is their union.
struct LabeledCase {
  std::string case_id;
  Volume image;
  Mask myocardium;
  Mask endocardium;  // blood pool
  Mask epicardium;   // filled outer contour
  std::optional<Mask> gt_scar;
  std::optional<Mask> gt_mvo;
  std::optional<Mask> remote;
  std::vector<SliceLabel> slice_labels;  // empty or length nz

  int nz() const { return image.dims().nz; }

  Mask gt_infarct() const {
    Mask m(image.dims(), image.spacing(), 0);
    if (gt_scar) m = mask_or(m, *gt_scar);
    if (gt_mvo) m = mask_or(m, *gt_mvo);
    return m;
  }

  /// Slice labels if present, otherwise derived from ground truth
  /// (diseased iff infarct is non-empty on the slice).
  std::vector<SliceLabel> labels_or_derived() const {
    if (!slice_labels.empty()) return slice_labels;
    std::vector<SliceLabel> out(static_cast<std::size_t>(nz()), SliceLabel::healthy);
    if (!gt_scar && !gt_mvo) return out;
    const Mask inf = gt_infarct();
    for (int z = 0; z < nz(); ++z)
      if (any(inf.slice(z))) out[static_cast<std::size_t>(z)] = SliceLabel::diseased;
    return out;
  }
};

}  // namespace lgeq
