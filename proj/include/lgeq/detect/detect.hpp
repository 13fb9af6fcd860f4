#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "lgeq/core/case.hpp"
#include "lgeq/core/parallel.hpp"
#include "lgeq/core/regions.hpp"
#include "lgeq/learn/margin.hpp"
#include "lgeq/learn/pca.hpp"
#include "lgeq/learn/train.hpp"
#include "lgeq/metrics/metrics.hpp"
#include "lgeq/vio/model_io.hpp"

namespace lgeq::detect {

inline constexpr int kInputSize = 89;

/// n x n crop centred on the rounded epicardial centroid of slice z,
/// zero outside the myocardium and outside the image, scaled by 1/255.
inline std::vector<float> extract_detection_input(const LabeledCase& c, int z, int n = kInputSize) {
  const MaskSlice epi = c.epicardium.slice(z);
  const auto [cx, cy] = centroid(epi);  // throws EmptyMask
  const MaskSlice myo = c.myocardium.slice(z);
  const Slice s = c.image.slice(z);
  const int x0 = static_cast<int>(std::lround(cx)) - n / 2, y0 = static_cast<int>(std::lround(cy)) - n / 2;
  std::vector<float> out(static_cast<std::size_t>(n) * static_cast<std::size_t>(n), 0.0f);
  for (int v = 0; v < n; ++v)
    for (int u = 0; u < n; ++u) {
      const int x = x0 + u, y = y0 + v;
      if (s.in_bounds(x, y) && myo(x, y))
        out[static_cast<std::size_t>(v) * static_cast<std::size_t>(n) + static_cast<std::size_t>(u)] = s(x, y) / 255.0f;
    }
  return out;
}

/// Slice-level samples with the index of the case each slice came from.
struct SliceSet {
  learn::Dataset data;
  std::vector<std::size_t> group;  // case index per sample
  std::vector<std::pair<std::size_t, int>> origin;  // (case, slice)
};

/// Every slice with a non-empty epicardium; label 1 = diseased.
inline SliceSet build_slice_set(const std::vector<LabeledCase>& cases, int n = kInputSize) {
  SliceSet s{{{1, n, n}, {}, {}}, {}, {}};
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const auto labels = cases[i].labels_or_derived();
    for (int z = 0; z < cases[i].nz(); ++z) {
      if (!any(cases[i].epicardium.slice(z))) continue;
      s.data.add(extract_detection_input(cases[i], z, n), labels[static_cast<std::size_t>(z)] == SliceLabel::diseased);
      s.group.push_back(i);
      s.origin.emplace_back(i, z);
    }
  }
  return s;
}

struct DetectConfig {
  learn::TrainConfig train = learn::TrainConfig::detection_defaults();
  int widths[4] = {16, 32, 64, 128};
  int input = kInputSize;
  double pca_variance = 0.95;
  double margin_lambda = 1e-2;
  int margin_epochs = 200;
  bool whiten = true;  // unit variance per principal component before the margin classifier

  void validate() const {
    train.validate();
    if (input < 8) throw ConfigError("detect: input size too small");
    if (!(margin_lambda > 0) || margin_epochs < 1) throw ConfigError("detect: bad margin settings");
  }
};

struct DetectionModel {
  learn::Net net;
  learn::PcaModel pca;
  learn::MarginModel margin;
  bool whiten = false;
  double tau = 0.0;
  std::uint64_t seed = 0;
};

/// Per-component multipliers of PCA projections: 1/sd of each component
/// when whitening, else 1/sd of the leading one.
inline Eigen::VectorXd feature_scales(const learn::PcaModel& pca, bool whiten) {
  const double floor = 1e-12 * pca.variances(0);
  Eigen::VectorXd s(pca.k());
  for (int j = 0; j < pca.k(); ++j) s(j) = 1.0 / std::sqrt(std::max(whiten ? pca.variances(j) : pca.variances(0), floor));
  return s;
}

/// Margin decision value of one prepared input.
inline double detect_score(const DetectionModel& m, std::span<const float> x, learn::Workspace& ws) {
  const std::vector<double> xd(x.begin(), x.end());
  const auto f = learn::net_features(m.net, xd, ws);
  const Eigen::Map<const Eigen::VectorXd> fv(f.data(), static_cast<Eigen::Index>(f.size()));
  const Eigen::VectorXd z = learn::pca_project(m.pca, fv).cwiseProduct(feature_scales(m.pca, m.whiten));
  return learn::margin_decide(m.margin, z);
}

inline std::vector<double> detect_scores(const DetectionModel& m, const learn::Dataset& d) {
  learn::Workspace ws;
  std::vector<double> s;
  s.reserve(d.size());
  for (const auto& x : d.samples) s.push_back(detect_score(m, x, ws));
  return s;
}

/// Trains the feature network on a class-balanced subset, then fits PCA
/// and the margin classifier on features of every training slice.
inline DetectionModel detect_fit(const learn::Dataset& train, const DetectConfig& cfg, std::uint64_t seed) {
  cfg.validate();
  if (std::count(train.labels.begin(), train.labels.end(), 1) == 0 ||
      std::count(train.labels.begin(), train.labels.end(), 0) == 0)
    throw SingleClassError("detect_fit: both slice classes are required");
  const auto balanced = learn::balance_classes(train.labels, derive_seed(seed, 1));
  learn::Net net(learn::detection_architecture(cfg.input, cfg.widths[0], cfg.widths[1], cfg.widths[2], cfg.widths[3],
                                               cfg.train.dropout));
  net.init_he(derive_seed(seed, 2));
  auto tc = cfg.train;
  tc.seed = derive_seed(seed, 3);
  auto res = learn::net_train(train.subset(balanced), std::move(net), tc);

  DetectionModel m{std::move(res.model), {}, {}, cfg.whiten, 0.0, seed};
  learn::Workspace ws;
  const auto fdim = static_cast<Eigen::Index>(m.net.shapes()[m.net.feature_activation_index()].count());
  Eigen::MatrixXd feats(static_cast<Eigen::Index>(train.size()), fdim);
  for (std::size_t i = 0; i < train.size(); ++i) {
    const std::vector<double> xd(train.samples[i].begin(), train.samples[i].end());
    const auto f = learn::net_features(m.net, xd, ws);
    feats.row(static_cast<Eigen::Index>(i)) = Eigen::Map<const Eigen::RowVectorXd>(f.data(), fdim);
  }
  m.pca = learn::pca_fit(feats, cfg.pca_variance);
  const Eigen::MatrixXd proj = learn::pca_project_rows(m.pca, feats) * feature_scales(m.pca, m.whiten).asDiagonal();
  std::vector<int> y(train.size());
  for (std::size_t i = 0; i < y.size(); ++i) y[i] = train.labels[i] ? 1 : -1;
  m.margin = learn::margin_train(proj, y, cfg.margin_lambda, cfg.margin_epochs, derive_seed(seed, 4));
  return m;
}

struct SlicePrediction {
  double score;
  SliceLabel label;
};

/// Per-slice scores and labels (diseased iff score >= tau). Slices without
/// an epicardium score -inf and are labelled healthy.
inline std::vector<SlicePrediction> detect_predict(const DetectionModel& m, const LabeledCase& c) {
  learn::Workspace ws;
  std::vector<SlicePrediction> out;
  const int n = m.net.input_shape().h;
  for (int z = 0; z < c.nz(); ++z) {
    if (!any(c.epicardium.slice(z))) {
      out.push_back({-std::numeric_limits<double>::infinity(), SliceLabel::healthy});
      continue;
    }
    const double s = detect_score(m, extract_detection_input(c, z, n), ws);
    out.push_back({s, s >= m.tau ? SliceLabel::diseased : SliceLabel::healthy});
  }
  return out;
}

inline std::vector<SliceLabel> gate_labels(const std::vector<SlicePrediction>& p) {
  std::vector<SliceLabel> g;
  for (const auto& x : p) g.push_back(x.label);
  return g;
}

struct OperatingPoint {
  double threshold, sensitivity, specificity;
};

/// The highest-specificity ROC point with TPR >= target. The threshold is
/// placed midway to the next lower score (-inf below the minimum), so
/// "score >= threshold" reproduces that point.
inline OperatingPoint pick_operating_point(const std::vector<metrics::RocPoint>& roc, double target) {
  if (!(target > 0 && target <= 1)) throw ConfigError("pick_operating_point: target must be in (0, 1]");
  for (std::size_t i = 1; i < roc.size(); ++i) {
    if (roc[i].tpr >= target) {
      const double t = i + 1 < roc.size() ? 0.5 * (roc[i].threshold + roc[i + 1].threshold)
                                          : -std::numeric_limits<double>::infinity();
      return {t, roc[i].tpr, 1.0 - roc[i].fpr};
    }
  }
  throw Unachievable("pick_operating_point: target sensitivity not reached");
}

// ---- splits and permutation analysis ------------------------------------------

struct Split {
  std::vector<std::size_t> train, validation, test;  // group (case) indices
};

/// Case-level split stratified by case label (diseased if any slice is).
/// Each partition receives at least one case of a class when the class has
/// three or more cases.
inline Split stratified_split(const std::vector<int>& group_label, std::uint64_t seed, double f_val = 0.1,
                              double f_test = 0.1) {
  Rng rng(seed);
  Split s;
  for (int cls = 0; cls <= 1; ++cls) {
    std::vector<std::size_t> idx;
    for (std::size_t g = 0; g < group_label.size(); ++g)
      if (group_label[g] == cls) idx.push_back(g);
    rng.shuffle(idx);
    const std::size_t n = idx.size();
    std::size_t n_test = static_cast<std::size_t>(std::lround(f_test * static_cast<double>(n)));
    std::size_t n_val = static_cast<std::size_t>(std::lround(f_val * static_cast<double>(n)));
    if (n >= 3) {
      n_test = std::max<std::size_t>(n_test, 1);
      n_val = std::max<std::size_t>(n_val, 1);
    }
    n_test = std::min(n_test, n);
    n_val = std::min(n_val, n - n_test);
    for (std::size_t k = 0; k < n; ++k)
      (k < n_test ? s.test : k < n_test + n_val ? s.validation : s.train).push_back(idx[k]);
  }
  for (auto* v : {&s.train, &s.validation, &s.test}) std::sort(v->begin(), v->end());
  return s;
}

inline std::vector<int> group_labels(const SliceSet& s) {
  std::size_t n = 0;
  for (auto g : s.group) n = std::max(n, g + 1);
  std::vector<int> lab(n, 0);
  for (std::size_t i = 0; i < s.group.size(); ++i)
    if (s.data.labels[i]) lab[s.group[i]] = 1;
  return lab;
}

inline std::vector<std::size_t> samples_of(const SliceSet& s, const std::vector<std::size_t>& groups) {
  std::vector<char> in(s.group.empty() ? 0 : *std::max_element(s.group.begin(), s.group.end()) + 1, 0);
  for (auto g : groups) in[g] = 1;
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < s.group.size(); ++i)
    if (in[s.group[i]]) out.push_back(i);
  return out;
}

struct PermutationResult {
  int n = 0;
  std::vector<double> auc_unpermuted, auc_permuted;
  double p = 1.0;

  /// Mean of the indicators auc_permuted >= auc_unpermuted.
  static double p_value(const std::vector<double>& unpermuted, const std::vector<double>& permuted) {
    if (unpermuted.size() != permuted.size() || unpermuted.empty())
      throw LengthMismatch("permutation p: AUC arrays must be non-empty and of equal length");
    std::size_t hits = 0;
    for (std::size_t i = 0; i < unpermuted.size(); ++i) hits += permuted[i] >= unpermuted[i];
    return static_cast<double>(hits) / static_cast<double>(unpermuted.size());
  }
};

/// Test AUC of a model fit on the training partition of split `i`. When
/// `permute` is set the training and validation labels are shuffled first;
/// the test labels stay true. Both variants share every other seed.
inline double split_auc(const SliceSet& s, const Split& sp, const DetectConfig& cfg, std::uint64_t seed, bool permute) {
  auto train_groups = sp.train;
  learn::Dataset train = s.data.subset(samples_of(s, train_groups));
  if (permute) {
    auto tv_groups = sp.train;
    tv_groups.insert(tv_groups.end(), sp.validation.begin(), sp.validation.end());
    std::sort(tv_groups.begin(), tv_groups.end());
    const auto tv = samples_of(s, tv_groups);
    std::vector<int> labels;
    for (auto i : tv) labels.push_back(s.data.labels[i]);
    Rng rng(derive_seed(seed, 77));
    rng.shuffle(labels);
    // training samples are the train-group members of tv, in order
    std::vector<char> is_train(s.group.size(), 0);
    for (auto i : samples_of(s, train_groups)) is_train[i] = 1;
    std::size_t k = 0;
    for (std::size_t j = 0; j < tv.size(); ++j)
      if (is_train[tv[j]]) train.labels[k++] = labels[j];
  }
  const auto model = detect_fit(train, cfg, derive_seed(seed, 5));
  const learn::Dataset test = s.data.subset(samples_of(s, sp.test));
  return metrics::auc(detect_scores(model, test), test.labels);
}

/// N splits; for each, AUC with true labels and with permuted labels.
inline PermutationResult permutation_test(const SliceSet& s, int n, const DetectConfig& cfg, std::uint64_t seed,
                                          int jobs = 1, bool with_permutation = true) {
  if (n < 1) throw ConfigError("permutation_test: N must be >= 1");
  const auto gl = group_labels(s);
  PermutationResult r;
  r.n = n;
  r.auc_unpermuted.assign(static_cast<std::size_t>(n), 0.0);
  r.auc_permuted.assign(static_cast<std::size_t>(n), 0.0);
  const std::size_t tasks = static_cast<std::size_t>(n) * (with_permutation ? 2 : 1);
  parallel_for(tasks, jobs, [&](std::size_t t) {
    const std::size_t i = t % static_cast<std::size_t>(n);
    const bool perm = t >= static_cast<std::size_t>(n);
    const auto split_seed = derive_seed(seed, 1000 + i);
    const auto sp = stratified_split(gl, split_seed);
    (perm ? r.auc_permuted : r.auc_unpermuted)[i] = split_auc(s, sp, cfg, split_seed, perm);
  });
  if (with_permutation) r.p = PermutationResult::p_value(r.auc_unpermuted, r.auc_permuted);
  return r;
}

// ---- persistence ------------------------------------------------------------------

inline void save_detection_model(const std::filesystem::path& path, const DetectionModel& m) {
  vio::write_json(path, {{"format", "lgeq-detector"},
                         {"version", 1},
                         {"net", vio::net_to_json(m.net)},
                         {"pca", vio::pca_to_json(m.pca)},
                         {"margin", vio::margin_to_json(m.margin)},
                         {"whiten", m.whiten},
                         {"tau", m.tau},
                         {"seed", m.seed}});
}

inline DetectionModel load_detection_model(const std::filesystem::path& path) {
  const auto j = vio::read_json(path);
  if (j.value("format", "") != "lgeq-detector") throw FormatError(path.string() + ": not a detector file");
  try {
    DetectionModel m{vio::net_from_json(j.at("net")), vio::pca_from_json(j.at("pca")), vio::margin_from_json(j.at("margin")),
                     j.at("whiten").get<bool>(), j.at("tau").get<double>(), j.at("seed").get<std::uint64_t>()};
    if (static_cast<std::size_t>(m.pca.dim()) != m.net.shapes()[m.net.feature_activation_index()].count() ||
        m.margin.w.size() != m.pca.k())
      throw FormatError(path.string() + ": component dimensions disagree");
    return m;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

}  // namespace lgeq::detect
