#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "lgeq/core/case.hpp"
#include "lgeq/core/histogram.hpp"
#include "lgeq/core/morphology.hpp"
#include "lgeq/core/parallel.hpp"
#include "lgeq/core/regions.hpp"
#include "lgeq/learn/train.hpp"
#include "lgeq/metrics/metrics.hpp"
#include "lgeq/vio/model_io.hpp"

namespace lgeq::segment {

// ---- coarse stage -----------------------------------------------------------

struct TophatConfig {
  int bar_length = 34;
  int orientations = 6;  // multiples of 180 / orientations degrees
};

/// slice + sum of white top-hats over rotated bars, clamped to [0, 255].
inline Slice tophat_enhance(const Slice& s, const TophatConfig& cfg = {}) {
  Slice out = s;
  for (int k = 0; k < cfg.orientations; ++k) {
    const auto th = white_tophat(s, StructuringElement::bar(cfg.bar_length, 180.0 * k / cfg.orientations));
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += th[i];
  }
  for (auto& v : out.raw()) v = std::clamp(v, 0.0f, 255.0f);
  return out;
}

struct CoarseResult {
  MaskSlice mask;
  std::optional<std::string> warning;  // set when the histogram was degenerate
};

/// Otsu on enhanced myocardial intensities, then a radius-1 disk opening.
inline CoarseResult coarse_segment(const Slice& enhanced, const MaskSlice& myo) {
  if (!enhanced.same_shape(myo)) throw AlignmentError("coarse_segment: slice and mask shapes differ");
  if (!any(myo)) throw EmptyMask("coarse_segment: empty myocardium");
  CoarseResult r{MaskSlice(myo.nx(), myo.ny(), 0), std::nullopt};
  int t;
  try {
    t = otsu_threshold(Histogram::of(enhanced, myo));
  } catch (const DegenerateHistogram& e) {
    r.warning = e.what();
    return r;
  }
  MaskSlice fg(myo.nx(), myo.ny(), 0);
  for (std::size_t i = 0; i < fg.size(); ++i)
    if (myo[i] && std::clamp(std::lround(enhanced[i]), 0L, 255L) > t) fg[i] = 1;
  r.mask = binary_open(fg, StructuringElement::disk(1));
  return r;
}

/// dilate(mask, disk r) minus erode(mask, disk r).
inline MaskSlice boundary_region(const MaskSlice& mask, int radius = 2) {
  const auto se = StructuringElement::disk(radius);
  return mask_minus(binary_dilate(mask, se), binary_erode(mask, se));
}

// ---- patches ----------------------------------------------------------------

/// n x n crop centred on (cx, cy), intensities scaled by 1/255, zero outside.
inline std::vector<float> extract_patch(const Slice& s, int cx, int cy, int n) {
  std::vector<float> p(static_cast<std::size_t>(n) * static_cast<std::size_t>(n), 0.0f);
  const int h = n / 2;
  for (int v = 0; v < n; ++v)
    for (int u = 0; u < n; ++u) {
      const int x = cx - h + u, y = cy - h + v;
      if (s.in_bounds(x, y)) p[static_cast<std::size_t>(v) * static_cast<std::size_t>(n) + static_cast<std::size_t>(u)] = s(x, y) / 255.0f;
    }
  return p;
}

/// Classifier ensemble over zero-centred patches.
struct PatchEnsemble {
  std::vector<learn::Net> members;
  std::vector<float> mean_patch;
  int patch = 49;

  void validate() const {
    if (members.empty() || members.size() % 2 == 0) throw ConfigError("ensemble: member count must be odd");
    for (const auto& m : members)
      if (!(m.input_shape() == learn::Shape3{1, patch, patch})) throw ShapeError("ensemble: member input shape differs");
    if (mean_patch.size() != static_cast<std::size_t>(patch) * static_cast<std::size_t>(patch))
      throw ShapeError("ensemble: mean patch size differs");
  }
};

struct PatchSamplingConfig {
  int patch = 49;
  int stride = 3;
  int band_radius = 5;
};

/// Balanced scar / healthy training patches around the scar ground truth.
/// Healthy centres: dilate(gt, r) minus gt, within the myocardium, since
/// refinement only ever relabels myocardial voxels. Scar centres: gt minus
/// erode(gt, r), or all of gt on slices where the erosion is empty. Centres
/// lie on a stride lattice anchored at (0, 0). Labels: 1 scar, 0 healthy.
inline learn::Dataset sample_training_patches(const LabeledCase& c, const PatchSamplingConfig& cfg, std::uint64_t seed) {
  if (!c.gt_scar) throw NoGroundTruth("sample_training_patches: case " + c.case_id + " has no scar ground truth");
  const auto disk = StructuringElement::disk(cfg.band_radius);
  learn::Dataset all{{1, cfg.patch, cfg.patch}, {}, {}};
  for (int z = 0; z < c.nz(); ++z) {
    const MaskSlice gt = c.gt_scar->slice(z);
    if (!any(gt)) continue;
    const Slice s = c.image.slice(z);
    const MaskSlice healthy = mask_and(mask_minus(binary_dilate(gt, disk), gt), c.myocardium.slice(z));
    const MaskSlice eroded = binary_erode(gt, disk);
    const MaskSlice scar = any(eroded) ? mask_minus(gt, eroded) : gt;
    for (int y = 0; y < gt.ny(); y += cfg.stride)
      for (int x = 0; x < gt.nx(); x += cfg.stride) {
        if (scar(x, y))
          all.add(extract_patch(s, x, y, cfg.patch), 1);
        else if (healthy(x, y))
          all.add(extract_patch(s, x, y, cfg.patch), 0);
      }
  }
  bool pos = false, neg = false;
  for (int l : all.labels) (l ? pos : neg) = true;
  if (!pos || !neg) return {all.shape, {}, {}};
  const auto keep = learn::balance_classes(all.labels, seed);
  return all.subset(keep);
}

// ---- refinement -------------------------------------------------------------

/// Relabels the boundary band of `coarse` (within the myocardium) by
/// majority vote; the eroded core stays scar and everything outside the
/// dilation stays background.
inline MaskSlice refine(const Slice& s, const MaskSlice& myo, const MaskSlice& coarse, const PatchEnsemble& ens,
                        int radius = 2) {
  ens.validate();
  if (!s.same_shape(myo) || !s.same_shape(coarse)) throw AlignmentError("refine: shapes differ");
  const auto se = StructuringElement::disk(radius);
  MaskSlice out = mask_and(binary_erode(coarse, se), myo);
  const MaskSlice band = mask_minus(binary_dilate(coarse, se), binary_erode(coarse, se));
  learn::Workspace ws;
  std::vector<double> x(ens.mean_patch.size());
  const std::size_t members = ens.members.size();
  for (int y = 0; y < s.ny(); ++y)
    for (int px = 0; px < s.nx(); ++px) {
      if (!band(px, y) || !myo(px, y)) continue;
      const auto p = extract_patch(s, px, y, ens.patch);
      for (std::size_t i = 0; i < x.size(); ++i) x[i] = static_cast<double>(p[i]) - ens.mean_patch[i];
      std::size_t votes = 0;
      for (const auto& m : ens.members) votes += m.predict(x, ws)[1] > 0.5 ? 1 : 0;
      out(px, y) = 2 * votes > members ? 1 : 0;
    }
  return out;
}

struct EnsembleConfig {
  int members = 7;
  PatchSamplingConfig sampling{};
  learn::TrainConfig train = learn::TrainConfig::refinement_defaults();
  int widths[4] = {16, 32, 64, 128};  // conv1, conv2, conv3, dense
  std::size_t max_patches_per_member = 0;  // 0 keeps every sampled patch

  void validate() const {
    if (members < 1 || members % 2 == 0) throw ConfigError("ensemble: member count must be odd");
    if (sampling.patch < 1 || sampling.stride < 1 || sampling.band_radius < 0) throw ConfigError("ensemble: bad sampling");
    train.validate();
  }
};

/// Trains each member on the cases outside its own fold of a members-way
/// split (every case when there are fewer cases than members). Cases
/// without scar patches take no part in the split. Patches are
/// zero-centred by the mean of all sampled training patches.
inline PatchEnsemble train_ensemble(const std::vector<LabeledCase>& cases, const EnsembleConfig& cfg, std::uint64_t seed,
                                    int jobs = 1, const std::function<void(int, int, double)>& on_epoch = {}) {
  cfg.validate();
  std::vector<learn::Dataset> per_case;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    if (!cases[i].gt_scar) continue;
    auto d = sample_training_patches(cases[i], cfg.sampling, derive_seed(seed, 100 + i));
    if (d.size() > 0) per_case.push_back(std::move(d));
  }
  std::size_t total = 0;
  for (const auto& d : per_case) total += d.size();
  if (total == 0) throw NoGroundTruth("train_ensemble: no scar ground truth in the training cases");

  const auto n = static_cast<std::size_t>(cfg.sampling.patch) * static_cast<std::size_t>(cfg.sampling.patch);
  std::vector<double> acc(n, 0.0);
  for (const auto& d : per_case)
    for (const auto& smp : d.samples)
      for (std::size_t i = 0; i < n; ++i) acc[i] += smp[i];
  PatchEnsemble ens;
  ens.patch = cfg.sampling.patch;
  ens.mean_patch.resize(n);
  for (std::size_t i = 0; i < n; ++i) ens.mean_patch[i] = static_cast<float>(acc[i] / static_cast<double>(total));

  const auto arch = learn::refinement_architecture(cfg.sampling.patch, cfg.widths[0], cfg.widths[1], cfg.widths[2],
                                                   cfg.widths[3], cfg.train.dropout);
  const auto m = static_cast<std::size_t>(cfg.members);
  std::vector<std::optional<learn::Net>> nets(m);
  parallel_for(m, jobs, [&](std::size_t k) {
    learn::Dataset data{{1, cfg.sampling.patch, cfg.sampling.patch}, {}, {}};
    for (std::size_t i = 0; i < per_case.size(); ++i) {
      if (per_case.size() >= m && i % m == k) continue;
      for (std::size_t j = 0; j < per_case[i].size(); ++j) {
        std::vector<float> smp = per_case[i].samples[j];
        for (std::size_t q = 0; q < n; ++q) smp[q] -= ens.mean_patch[q];
        data.add(std::move(smp), per_case[i].labels[j]);
      }
    }
    if (cfg.max_patches_per_member > 0 && data.size() > cfg.max_patches_per_member) {
      // keep class balance while capping
      std::vector<std::size_t> idx[2];
      for (std::size_t i = 0; i < data.size(); ++i) idx[data.labels[i]].push_back(i);
      Rng rng(derive_seed(seed, 200 + k));
      std::vector<std::size_t> keep;
      const std::size_t half = cfg.max_patches_per_member / 2;
      for (auto& v : idx) {
        rng.shuffle(v);
        v.resize(std::min(v.size(), half));
        keep.insert(keep.end(), v.begin(), v.end());
      }
      std::sort(keep.begin(), keep.end());
      data = data.subset(keep);
    }
    learn::Net net(arch);
    net.init_he(derive_seed(seed, 300 + k));
    auto tc = cfg.train;
    tc.seed = derive_seed(seed, 400 + k);
    auto res = learn::net_train(data, std::move(net), tc, [&](int e, double loss) {
      if (on_epoch) on_epoch(static_cast<int>(k), e, loss);
    });
    nets[k] = std::move(res.model);
  });
  for (auto& net : nets) ens.members.push_back(std::move(*net));
  return ens;
}

inline void save_ensemble(const std::filesystem::path& path, const PatchEnsemble& ens) {
  nlohmann::json members = nlohmann::json::array();
  for (const auto& m : ens.members) members.push_back(vio::net_to_json(m));
  std::vector<double> mean(ens.mean_patch.begin(), ens.mean_patch.end());
  vio::write_json(path, {{"format", "lgeq-ensemble"},
                         {"version", 1},
                         {"patch", ens.patch},
                         {"mean_patch", vio::encode_f64(mean.data(), mean.size(), {ens.patch, ens.patch})},
                         {"members", members}});
}

inline PatchEnsemble load_ensemble(const std::filesystem::path& path) {
  const auto j = vio::read_json(path);
  if (j.value("format", "") != "lgeq-ensemble") throw FormatError(path.string() + ": not an ensemble file");
  try {
    PatchEnsemble ens;
    ens.patch = j.at("patch").get<int>();
    const auto n = static_cast<std::size_t>(ens.patch) * static_cast<std::size_t>(ens.patch);
    const auto mean = vio::decode_f64(j.at("mean_patch"), n);
    ens.mean_patch.assign(mean.begin(), mean.end());
    for (const auto& m : j.at("members")) ens.members.push_back(vio::net_from_json(m));
    ens.validate();
    return ens;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

// ---- MVO ----------------------------------------------------------------------

struct MvoResult {
  MaskSlice final_mask, mvo;
};

/// Holes of (endo or hyper) inside the myocardium become MVO.
inline MvoResult include_mvo(const MaskSlice& hyper, const MaskSlice& endo, const MaskSlice& myo) {
  const MaskSlice u = mask_or(endo, hyper);
  const MaskSlice filled = fill_holes_2d(u);
  MvoResult r;
  r.mvo = mask_and(mask_minus(filled, u), myo);
  r.final_mask = mask_or(hyper, r.mvo);
  return r;
}

// ---- case orchestration ----------------------------------------------------------

struct SegmentOptions {
  bool refine = true;
  bool mvo = true;
  TophatConfig tophat{};
  int band_radius = 2;
};

struct SegmentationResult {
  Mask coarse, hyper, mvo, final_mask;
  std::vector<bool> processed;  // slices that passed the gate and had myocardium
  std::vector<std::string> warnings;
  double scar_volume_cm3 = 0;
  std::optional<double> percent_infarct;  // undefined for an empty myocardium
};

/// Per-slice cascade on a preprocessed case. `gate` (when given) skips
/// slices labelled healthy; skipped slices keep empty masks.
inline SegmentationResult segment_case(const LabeledCase& c, const std::vector<SliceLabel>* gate,
                                       const PatchEnsemble* ensemble, const SegmentOptions& opt = {}) {
  if (opt.refine && !ensemble) throw ConfigError("segment_case: refinement requested without an ensemble");
  if (gate && gate->size() != static_cast<std::size_t>(c.nz())) throw LengthMismatch("segment_case: gate length differs");
  const auto& d = c.image.dims();
  const auto sp = c.image.spacing();
  SegmentationResult r{Mask(d, sp, 0), Mask(d, sp, 0), Mask(d, sp, 0), Mask(d, sp, 0), {}, {}, 0, std::nullopt};
  r.processed.assign(static_cast<std::size_t>(d.nz), false);
  for (int z = 0; z < d.nz; ++z) {
    if (gate && (*gate)[static_cast<std::size_t>(z)] == SliceLabel::healthy) continue;
    const MaskSlice myo = c.myocardium.slice(z);
    if (!any(myo)) continue;
    try {
      const Slice s = c.image.slice(z);
      auto coarse = coarse_segment(tophat_enhance(s, opt.tophat), myo);
      if (coarse.warning) r.warnings.push_back("slice " + std::to_string(z) + ": " + *coarse.warning);
      MaskSlice hyper = opt.refine ? refine(s, myo, coarse.mask, *ensemble, opt.band_radius) : coarse.mask;
      MaskSlice mvo(d.nx, d.ny, 0), fin = hyper;
      if (opt.mvo) {
        auto m = include_mvo(hyper, c.endocardium.slice(z), myo);
        mvo = std::move(m.mvo);
        fin = std::move(m.final_mask);
      }
      r.coarse.set_slice(z, coarse.mask);
      r.hyper.set_slice(z, hyper);
      r.mvo.set_slice(z, mvo);
      r.final_mask.set_slice(z, fin);
      r.processed[static_cast<std::size_t>(z)] = true;
    } catch (const Error& e) {
      r.warnings.push_back("slice " + std::to_string(z) + ": " + e.what());
    }
  }
  r.scar_volume_cm3 = metrics::scar_volume_cm3(r.final_mask);
  if (any(c.myocardium)) r.percent_infarct = metrics::percent_infarct(r.final_mask, c.myocardium);
  return r;
}

}  // namespace lgeq::segment
