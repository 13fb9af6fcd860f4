#pragma once

// Batch front end: one JSON run configuration drives phantom generation,
// training, detection, segmentation, baselines, cross-validated evaluation
// and the permutation analysis. Every command writes a provenance file
// next to its artifacts.

#include <algorithm>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lgeq/baselines/baselines.hpp"
#include "lgeq/core/parallel.hpp"
#include "lgeq/detect/detect.hpp"
#include "lgeq/metrics/metrics.hpp"
#include "lgeq/phantom/phantom.hpp"
#include "lgeq/preprocess/preprocess.hpp"
#include "lgeq/segment/segment.hpp"
#include "lgeq/vio/manifest.hpp"
#include "lgeq/vio/metaimage.hpp"
#include "lgeq/vio/model_io.hpp"
#include "lgeq/vio/report.hpp"

namespace lgeq::cli {

namespace fs = std::filesystem;
using nlohmann::json;

inline constexpr const char* kVersion = "1.0.0";

/// 64-bit FNV-1a.
inline std::uint64_t fnv1a64(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

struct Seeds {
  std::uint64_t phantom = 1, detect = 2, refine = 3, split = 4, permtest = 5;
  void set_all(std::uint64_t s) { phantom = detect = refine = split = permtest = s; }
};

struct CorpusConfig {
  int count = 30;
  bool balanced = false;  // alternate healthy / diseased cases
  double mvo_rate = 0.0;
  bool vary = true;
  phantom::PhantomSpec base{};
  std::string prefix = "case";
};

struct RunConfig {
  std::vector<fs::path> manifests;  // manifest files or corpus lists
  fs::path out = "out";
  fs::path model_dir;  // empty: same as out
  preprocess::PreprocessConfig preprocess;
  detect::DetectConfig detect;
  double target_sensitivity = 0.0;  // > 0: calibrate tau on the training ROC
  segment::EnsembleConfig refine;
  segment::SegmentOptions segment;
  bool use_detect = true;
  Seeds seeds;
  int jobs = 1;
  CorpusConfig corpus;
  int folds = 5;
  int permutation_splits = 100;

  fs::path models() const { return model_dir.empty() ? out : model_dir; }
};

// ---- JSON <-> config ---------------------------------------------------------------

namespace detail {

/// Typed access to one JSON object that rejects unknown keys.
class Reader {
 public:
  Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
  }
  ~Reader() = default;

  template <class T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    if (!j_.contains(key)) return;
    try {
      out = j_.at(key).get<T>();
    } catch (const json::exception&) {
      throw ConfigError(where_ + "." + key + ": wrong type");
    }
  }
  bool has(const char* key) {
    seen_.insert(key);
    return j_.contains(key);
  }
  Reader sub(const char* key) {
    seen_.insert(key);
    return Reader(j_.at(key), where_ + "." + key);
  }
  const json& raw(const char* key) {
    seen_.insert(key);
    return j_.at(key);
  }
  void finish() const {
    for (const auto& [k, v] : j_.items())
      if (!seen_.count(k)) throw ConfigError(where_ + ": unknown key '" + k + "'");
  }

 private:
  const json& j_;
  std::string where_;
  std::set<std::string> seen_;
};

inline json train_to_json(const learn::TrainConfig& t) {
  return {{"learning_rate", t.learning_rate}, {"momentum", t.momentum}, {"batch_size", t.batch_size}, {"l2", t.l2},
          {"epochs", t.epochs},           {"dropout", t.dropout},   {"augment", t.augment}};
}

inline void train_from(Reader r, learn::TrainConfig& t) {
  r.get("learning_rate", t.learning_rate);
  r.get("momentum", t.momentum);
  r.get("batch_size", t.batch_size);
  r.get("l2", t.l2);
  r.get("epochs", t.epochs);
  r.get("dropout", t.dropout);
  r.get("augment", t.augment);
  r.finish();
}

inline void widths_from(Reader& r, int (&w)[4]) {
  if (!r.has("widths")) return;
  std::vector<int> v;
  r.get("widths", v);
  if (v.size() != 4) throw ConfigError("widths: need four entries");
  std::copy(v.begin(), v.end(), w);
}

inline std::array<double, 3> triple(const std::vector<double>& v, const char* what) {
  if (v.size() != 3) throw ConfigError(std::string(what) + ": need three entries");
  return {v[0], v[1], v[2]};
}

}  // namespace detail

inline json to_json(const RunConfig& c) {
  json manifests = json::array();
  for (const auto& m : c.manifests) manifests.push_back(m.generic_string());
  const auto& p = c.preprocess;
  const auto& b = c.corpus.base;
  return {
      {"manifests", manifests},
      {"out", c.out.generic_string()},
      {"model_dir", c.model_dir.generic_string()},
      {"jobs", c.jobs},
      {"preprocess",
       {{"target_spacing", {p.target_spacing.sx, p.target_spacing.sy, p.target_spacing.sz}},
        {"gamma", p.gamma},
        {"p_lo", p.p_lo},
        {"p_hi", p.p_hi},
        {"denoise", p.denoise},
        {"allow_through_plane", p.allow_through_plane},
        {"nlm", {{"patch_radius", p.nlm.patch_radius}, {"search_radius", p.nlm.search_radius}, {"h_factor", p.nlm.h_factor}}}}},
      {"detect",
       {{"train", detail::train_to_json(c.detect.train)},
        {"widths", c.detect.widths},
        {"input", c.detect.input},
        {"pca_variance", c.detect.pca_variance},
        {"margin_lambda", c.detect.margin_lambda},
        {"margin_epochs", c.detect.margin_epochs},
        {"whiten", c.detect.whiten},
        {"target_sensitivity", c.target_sensitivity}}},
      {"refine",
       {{"train", detail::train_to_json(c.refine.train)},
        {"widths", c.refine.widths},
        {"members", c.refine.members},
        {"patch", c.refine.sampling.patch},
        {"stride", c.refine.sampling.stride},
        {"sample_band_radius", c.refine.sampling.band_radius},
        {"max_patches_per_member", c.refine.max_patches_per_member}}},
      {"segment",
       {{"band_radius", c.segment.band_radius},
        {"bar_length", c.segment.tophat.bar_length},
        {"orientations", c.segment.tophat.orientations}}},
      {"pipeline", {{"detect", c.use_detect}, {"refine", c.segment.refine}, {"mvo", c.segment.mvo}}},
      {"seeds",
       {{"phantom", c.seeds.phantom},
        {"detect", c.seeds.detect},
        {"refine", c.seeds.refine},
        {"split", c.seeds.split},
        {"permtest", c.seeds.permtest}}},
      {"phantom",
       {{"count", c.corpus.count},
        {"balanced", c.corpus.balanced},
        {"mvo_rate", c.corpus.mvo_rate},
        {"vary", c.corpus.vary},
        {"prefix", c.corpus.prefix},
        {"dims", {b.dims.nx, b.dims.ny, b.dims.nz}},
        {"spacing", {b.spacing.sx, b.spacing.sy, b.spacing.sz}},
        {"inner_radius_mm", b.inner_radius_mm},
        {"outer_radius_mm", b.outer_radius_mm},
        {"blur_sigma_px", b.blur_sigma_px}}},
      {"evaluate", {{"folds", c.folds}}},
      {"permtest", {{"splits", c.permutation_splits}}},
  };
}

/// Parses a configuration document; relative paths resolve against
/// `base_dir`. Missing keys keep their defaults, unknown keys are errors.
inline RunConfig from_json(const json& j, const fs::path& base_dir = {}) {
  RunConfig c;
  detail::Reader r(j, "config");
  auto resolve = [&](const std::string& s) {
    const fs::path p(s);
    return p.is_absolute() || base_dir.empty() ? p : base_dir / p;
  };
  if (r.has("manifests")) {
    std::vector<std::string> v;
    r.get("manifests", v);
    for (const auto& s : v) c.manifests.push_back(resolve(s));
  }
  if (r.has("out")) {
    std::string s;
    r.get("out", s);
    c.out = resolve(s);
  }
  if (r.has("model_dir")) {
    std::string s;
    r.get("model_dir", s);
    if (!s.empty()) c.model_dir = resolve(s);
  }
  r.get("jobs", c.jobs);
  if (r.has("preprocess")) {
    auto p = r.sub("preprocess");
    auto& q = c.preprocess;
    if (p.has("target_spacing")) {
      std::vector<double> v;
      p.get("target_spacing", v);
      const auto t = detail::triple(v, "preprocess.target_spacing");
      q.target_spacing = {t[0], t[1], t[2]};
    }
    p.get("gamma", q.gamma);
    p.get("p_lo", q.p_lo);
    p.get("p_hi", q.p_hi);
    p.get("denoise", q.denoise);
    p.get("allow_through_plane", q.allow_through_plane);
    if (p.has("nlm")) {
      auto n = p.sub("nlm");
      n.get("patch_radius", q.nlm.patch_radius);
      n.get("search_radius", q.nlm.search_radius);
      n.get("h_factor", q.nlm.h_factor);
      n.finish();
    }
    p.finish();
  }
  if (r.has("detect")) {
    auto d = r.sub("detect");
    if (d.has("train")) detail::train_from(d.sub("train"), c.detect.train);
    detail::widths_from(d, c.detect.widths);
    d.get("input", c.detect.input);
    d.get("pca_variance", c.detect.pca_variance);
    d.get("margin_lambda", c.detect.margin_lambda);
    d.get("margin_epochs", c.detect.margin_epochs);
    d.get("whiten", c.detect.whiten);
    d.get("target_sensitivity", c.target_sensitivity);
    d.finish();
  }
  if (r.has("refine")) {
    auto e = r.sub("refine");
    if (e.has("train")) detail::train_from(e.sub("train"), c.refine.train);
    detail::widths_from(e, c.refine.widths);
    e.get("members", c.refine.members);
    e.get("patch", c.refine.sampling.patch);
    e.get("stride", c.refine.sampling.stride);
    e.get("sample_band_radius", c.refine.sampling.band_radius);
    e.get("max_patches_per_member", c.refine.max_patches_per_member);
    e.finish();
  }
  if (r.has("segment")) {
    auto s = r.sub("segment");
    s.get("band_radius", c.segment.band_radius);
    s.get("bar_length", c.segment.tophat.bar_length);
    s.get("orientations", c.segment.tophat.orientations);
    s.finish();
  }
  if (r.has("pipeline")) {
    auto p = r.sub("pipeline");
    p.get("detect", c.use_detect);
    p.get("refine", c.segment.refine);
    p.get("mvo", c.segment.mvo);
    p.finish();
  }
  if (r.has("seeds")) {
    auto s = r.sub("seeds");
    s.get("phantom", c.seeds.phantom);
    s.get("detect", c.seeds.detect);
    s.get("refine", c.seeds.refine);
    s.get("split", c.seeds.split);
    s.get("permtest", c.seeds.permtest);
    s.finish();
  }
  if (r.has("phantom")) {
    auto p = r.sub("phantom");
    auto& k = c.corpus;
    p.get("count", k.count);
    p.get("balanced", k.balanced);
    p.get("mvo_rate", k.mvo_rate);
    p.get("vary", k.vary);
    p.get("prefix", k.prefix);
    if (p.has("dims")) {
      std::vector<int> v;
      p.get("dims", v);
      if (v.size() != 3) throw ConfigError("phantom.dims: need three entries");
      k.base.dims = {v[0], v[1], v[2]};
    }
    if (p.has("spacing")) {
      std::vector<double> v;
      p.get("spacing", v);
      const auto t = detail::triple(v, "phantom.spacing");
      k.base.spacing = {t[0], t[1], t[2]};
    }
    p.get("inner_radius_mm", k.base.inner_radius_mm);
    p.get("outer_radius_mm", k.base.outer_radius_mm);
    p.get("blur_sigma_px", k.base.blur_sigma_px);
    p.finish();
  }
  if (r.has("evaluate")) {
    auto e = r.sub("evaluate");
    e.get("folds", c.folds);
    e.finish();
  }
  if (r.has("permtest")) {
    auto e = r.sub("permtest");
    e.get("splits", c.permutation_splits);
    e.finish();
  }
  r.finish();
  return c;
}

inline RunConfig load_config(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
  return from_json(j, path.parent_path());
}

inline std::string config_hash(const RunConfig& c) { return "fnv1a64:" + hex64(fnv1a64(to_json(c).dump())); }

// ---- validation -----------------------------------------------------------------

enum class Command { phantom_gen, train_detect, train_refine, detect, segment, baselines, evaluate, permtest };

inline std::string command_name(Command c) {
  switch (c) {
    case Command::phantom_gen: return "phantom-gen";
    case Command::train_detect: return "train-detect";
    case Command::train_refine: return "train-refine";
    case Command::detect: return "detect";
    case Command::segment: return "segment";
    case Command::baselines: return "baselines";
    case Command::evaluate: return "evaluate";
    case Command::permtest: return "permtest";
  }
  return "unknown";
}

inline bool needs_cases(Command c) { return c != Command::phantom_gen; }

/// Checks parameters and that every referenced input exists.
inline void validate(const RunConfig& c, Command cmd) {
  if (c.jobs < 1) throw ConfigError("jobs must be >= 1");
  c.preprocess.validate();
  if (needs_cases(cmd)) {
    if (c.manifests.empty()) throw ConfigError("no manifests given");
    for (const auto& m : c.manifests)
      if (!fs::is_regular_file(m)) throw ConfigError("manifest not found: " + m.string());
  }
  switch (cmd) {
    case Command::phantom_gen:
      if (c.corpus.count < 1) throw ConfigError("phantom.count must be >= 1");
      if (!(c.corpus.mvo_rate >= 0 && c.corpus.mvo_rate <= 1)) throw ConfigError("phantom.mvo_rate must be in [0, 1]");
      c.corpus.base.validate();
      break;
    case Command::train_detect:
    case Command::permtest:
      c.detect.validate();
      if (!(c.target_sensitivity >= 0 && c.target_sensitivity <= 1))
        throw ConfigError("detect.target_sensitivity must be in [0, 1]");
      if (cmd == Command::permtest && c.permutation_splits < 1) throw ConfigError("permtest.splits must be >= 1");
      break;
    case Command::train_refine:
      c.refine.validate();
      break;
    case Command::detect:
      if (!fs::is_regular_file(c.models() / "detector.json"))
        throw ConfigError("detector model not found: " + (c.models() / "detector.json").string());
      break;
    case Command::segment:
      if (c.use_detect && !fs::is_regular_file(c.models() / "detector.json"))
        throw ConfigError("detector model not found: " + (c.models() / "detector.json").string());
      if (c.segment.refine && !fs::is_regular_file(c.models() / "ensemble.json"))
        throw ConfigError("ensemble model not found: " + (c.models() / "ensemble.json").string());
      break;
    case Command::baselines:
      break;
    case Command::evaluate:
      if (c.folds < 2) throw ConfigError("evaluate.folds must be >= 2");
      if (c.segment.refine) c.refine.validate();
      if (c.use_detect) c.detect.validate();
      break;
  }
}

// ---- I/O helpers ---------------------------------------------------------------------

/// Manifest paths after expanding corpus lists (JSON files with a
/// "manifests" array, entries relative to the list).
inline std::vector<fs::path> expand_manifests(const std::vector<fs::path>& in) {
  std::vector<fs::path> out;
  for (const auto& p : in) {
    const auto j = vio::read_json(p);
    if (j.is_object() && j.contains("manifests") && j["manifests"].is_array()) {
      for (const auto& e : j["manifests"]) {
        const fs::path q(e.get<std::string>());
        out.push_back(q.is_absolute() ? q : p.parent_path() / q);
      }
    } else {
      out.push_back(p);
    }
  }
  return out;
}

/// Loads and preprocesses every case, in manifest order.
inline std::vector<LabeledCase> load_cases(const RunConfig& c) {
  const auto paths = expand_manifests(c.manifests);
  std::vector<LabeledCase> raw;
  for (const auto& p : paths) raw.push_back(vio::read_manifest(p));
  std::vector<LabeledCase> out(raw.size());
  parallel_for(raw.size(), c.jobs, [&](std::size_t i) { out[i] = preprocess::preprocess_case(raw[i], c.preprocess); });
  return out;
}

/// Records written artifacts and emits the provenance file.
class Provenance {
 public:
  Provenance(const RunConfig& c, Command cmd) : cfg_(c), cmd_(cmd) {}

  void add(const fs::path& p) { files_.push_back(p); }

  void write(const fs::path& dir) const {
    json artifacts = json::array();
    for (const auto& f : files_) {
      std::ifstream in(f, std::ios::binary);
      std::ostringstream s;
      s << in.rdbuf();
      artifacts.push_back({{"path", fs::relative(f, dir).generic_string()}, {"fnv1a64", hex64(fnv1a64(s.str()))}});
    }
    const auto j = to_json(cfg_);
    vio::write_json(dir / (command_name(cmd_) + ".provenance.json"),
                    {{"toolkit", "lgeq"},
                     {"version", kVersion},
                     {"command", command_name(cmd_)},
                     {"config_hash", config_hash(cfg_)},
                     {"seeds", j["seeds"]},
                     {"config", j},
                     {"artifacts", artifacts}});
  }

 private:
  const RunConfig& cfg_;
  Command cmd_;
  std::vector<fs::path> files_;
};

inline void write_text(const fs::path& p, const std::string& s) {
  std::ofstream out(p, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + p.string());
  out << s;
  if (!out) throw IoError("write failed: " + p.string());
}

inline json number_or_null(const std::optional<double>& v) { return v ? json(*v) : json(nullptr); }

/// Mean and sample SD of the values present; null when undefined.
inline json describe(const std::vector<double>& v) {
  json j{{"n", v.size()}, {"mean", nullptr}, {"sd", nullptr}};
  if (!v.empty()) j["mean"] = metrics::mean(v);
  if (v.size() >= 2) j["sd"] = metrics::sample_sd(v);
  return j;
}

template <class Fn>
json try_stat(Fn&& fn) {
  try {
    return fn();
  } catch (const Error& e) {
    return {{"error", e.kind()}};
  }
}

// ---- case-level metrics ------------------------------------------------------------

/// One report row comparing `pred` with the case ground truth when present.
inline vio::ReportRow case_row(const LabeledCase& c, const std::string& method, const Mask& pred) {
  vio::ReportRow r;
  r.case_id = c.case_id;
  r.method = method;
  r.scar_volume_cm3 = metrics::scar_volume_cm3(pred);
  if (any(c.myocardium)) r.pct_infarct = metrics::percent_infarct(pred, c.myocardium);
  if (c.gt_scar || c.gt_mvo) {
    const Mask gt = c.gt_infarct();
    r.dice_pct = 100.0 * metrics::dice(pred, gt);
    if (any(pred) && any(gt)) r.hausdorff_mm = metrics::hausdorff3d(pred, gt);
    if (c.gt_mvo && any(*c.gt_mvo)) r.mvo_sensitivity = metrics::mvo_sensitivity(pred, *c.gt_mvo);
  }
  return r;
}

// ---- commands -----------------------------------------------------------------------

struct Outcome {
  std::string summary;  // one line for stdout
};

inline Outcome run_phantom_gen(const RunConfig& c) {
  fs::create_directories(c.out);
  Provenance prov(c, Command::phantom_gen);
  const auto& k = c.corpus;
  const auto cases = phantom::generate_corpus(k.base, k.count, c.seeds.phantom, k.balanced, k.mvo_rate, k.vary, k.prefix);
  json list = json::array();
  for (const auto& cs : cases) {
    const auto mpath = c.out / (cs.case_id + ".json");
    const auto m = vio::write_case(mpath, cs);
    list.push_back(mpath.filename().generic_string());
    prov.add(mpath);
    for (const auto& f : {std::optional<fs::path>(m.volume), std::optional<fs::path>(m.myocardium),
                          std::optional<fs::path>(m.endocardium), std::optional<fs::path>(m.epicardium), m.gt_scar, m.gt_mvo}) {
      if (!f) continue;
      prov.add(c.out / *f);
      prov.add(c.out / (f->stem().string() + ".raw"));
    }
  }
  vio::write_json(c.out / "corpus.json", {{"manifests", list}});
  prov.add(c.out / "corpus.json");
  prov.write(c.out);
  return {"phantom gen: " + std::to_string(cases.size()) + " cases in " + c.out.string()};
}

inline detect::DetectionModel fit_detector(const std::vector<LabeledCase>& cases, const RunConfig& c, std::uint64_t seed) {
  const auto set = detect::build_slice_set(cases, c.detect.input);
  auto model = detect::detect_fit(set.data, c.detect, seed);
  if (c.target_sensitivity > 0) {
    const auto roc = metrics::roc_curve(detect::detect_scores(model, set.data), set.data.labels);
    model.tau = detect::pick_operating_point(roc, c.target_sensitivity).threshold;
  }
  return model;
}

inline Outcome run_train_detect(const RunConfig& c) {
  const auto cases = load_cases(c);
  const auto model = fit_detector(cases, c, c.seeds.detect);
  fs::create_directories(c.models());
  const auto path = c.models() / "detector.json";
  detect::save_detection_model(path, model);
  Provenance prov(c, Command::train_detect);
  prov.add(path);
  prov.write(c.models());
  return {"train detect: " + path.string()};
}

inline Outcome run_train_refine(const RunConfig& c) {
  const auto cases = load_cases(c);
  const auto ens = segment::train_ensemble(cases, c.refine, c.seeds.refine, c.jobs);
  fs::create_directories(c.models());
  const auto path = c.models() / "ensemble.json";
  segment::save_ensemble(path, ens);
  Provenance prov(c, Command::train_refine);
  prov.add(path);
  prov.write(c.models());
  return {"train refine: " + path.string()};
}

inline Outcome run_detect(const RunConfig& c) {
  const auto cases = load_cases(c);
  const auto model = detect::load_detection_model(c.models() / "detector.json");
  std::vector<std::vector<detect::SlicePrediction>> pred(cases.size());
  parallel_for(cases.size(), c.jobs, [&](std::size_t i) { pred[i] = detect::detect_predict(model, cases[i]); });
  std::ostringstream csv;
  csv << "case_id,slice,score,label,truth\n";
  std::vector<double> scores;
  std::vector<int> truth;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const bool has_truth = !cases[i].slice_labels.empty() || cases[i].gt_scar || cases[i].gt_mvo;
    const auto labels = cases[i].labels_or_derived();
    for (std::size_t z = 0; z < pred[i].size(); ++z) {
      const auto& p = pred[i][z];
      csv << cases[i].case_id << ',' << z << ',' << (std::isfinite(p.score) ? vio::format_fixed4(p.score) : "") << ','
          << vio::to_string(p.label) << ',' << (has_truth ? vio::to_string(labels[z]) : "") << '\n';
      if (has_truth && std::isfinite(p.score)) {
        scores.push_back(p.score);
        truth.push_back(labels[z] == SliceLabel::diseased);
      }
    }
  }
  fs::create_directories(c.out);
  const auto csv_path = c.out / "detect.csv", sum_path = c.out / "detect_summary.json";
  write_text(csv_path, csv.str());
  json summary{{"slices", scores.size()}, {"tau", model.tau}};
  summary["auc"] = try_stat([&]() -> json { return metrics::auc(scores, truth); });
  summary["rates"] = try_stat([&]() -> json {
    metrics::ConfusionCounts cc;
    for (std::size_t i = 0; i < scores.size(); ++i) {
      const bool pos = scores[i] >= model.tau;
      (truth[i] ? (pos ? cc.tp : cc.fn) : (pos ? cc.fp : cc.tn))++;
    }
    const auto r = metrics::sens_spec_acc(cc);
    return {{"sensitivity", r.sensitivity}, {"specificity", r.specificity}, {"accuracy", r.accuracy}};
  });
  vio::write_json(sum_path, summary);
  Provenance prov(c, Command::detect);
  prov.add(csv_path);
  prov.add(sum_path);
  prov.write(c.out);
  return {"detect: " + std::to_string(scores.size()) + " scored slices"};
}

inline Outcome run_segment(const RunConfig& c) {
  const auto cases = load_cases(c);
  std::optional<detect::DetectionModel> det;
  if (c.use_detect) det = detect::load_detection_model(c.models() / "detector.json");
  std::optional<segment::PatchEnsemble> ens;
  if (c.segment.refine) ens = segment::load_ensemble(c.models() / "ensemble.json");
  std::vector<segment::SegmentationResult> res(cases.size());
  parallel_for(cases.size(), c.jobs, [&](std::size_t i) {
    std::optional<std::vector<SliceLabel>> gate;
    if (det) gate = detect::gate_labels(detect::detect_predict(*det, cases[i]));
    res[i] = segment::segment_case(cases[i], gate ? &*gate : nullptr, ens ? &*ens : nullptr, c.segment);
  });
  fs::create_directories(c.out);
  Provenance prov(c, Command::segment);
  vio::MetricsReport report;
  json warnings = json::object();
  for (std::size_t i = 0; i < cases.size(); ++i) {
    const auto& id = cases[i].case_id;
    for (const auto& [suffix, mask] : {std::pair<const char*, const Mask*>{"hyper", &res[i].hyper},
                                       {"mvo", &res[i].mvo},
                                       {"final", &res[i].final_mask}}) {
      const auto p = c.out / (id + "_" + suffix + ".mhd");
      vio::write_mask(p, *mask);
      prov.add(p);
      prov.add(c.out / (id + "_" + suffix + ".raw"));
    }
    report.rows.push_back(case_row(cases[i], "proposed", res[i].final_mask));
    if (!res[i].warnings.empty()) warnings[id] = res[i].warnings;
  }
  const auto csv_path = c.out / "segment.csv", sum_path = c.out / "segment_summary.json";
  vio::write_report(report, csv_path);
  vio::write_json(sum_path, {{"cases", cases.size()}, {"warnings", warnings}});
  prov.add(csv_path);
  prov.add(sum_path);
  prov.write(c.out);
  return {"segment: " + std::to_string(cases.size()) + " cases"};
}

inline Outcome run_baselines(const RunConfig& c) {
  const auto cases = load_cases(c);
  std::vector<baselines::BaselineOutput> res(cases.size());
  parallel_for(cases.size(), c.jobs, [&](std::size_t i) { res[i] = baselines::run_all(cases[i]); });
  fs::create_directories(c.out);
  Provenance prov(c, Command::baselines);
  vio::MetricsReport report;
  json warnings = json::object();
  const auto& names = baselines::method_names();
  for (std::size_t i = 0; i < cases.size(); ++i) {
    for (std::size_t k = 0; k < names.size(); ++k) {
      const auto p = c.out / (cases[i].case_id + "_" + names[k] + ".mhd");
      vio::write_mask(p, res[i].masks[k]);
      prov.add(p);
      prov.add(c.out / (cases[i].case_id + "_" + names[k] + ".raw"));
      report.rows.push_back(case_row(cases[i], names[k], res[i].masks[k]));
    }
    if (!res[i].warnings.empty()) warnings[cases[i].case_id] = res[i].warnings;
  }
  const auto csv_path = c.out / "baselines.csv", sum_path = c.out / "baselines_summary.json";
  vio::write_report(report, csv_path);
  vio::write_json(sum_path, {{"cases", cases.size()}, {"warnings", warnings}});
  prov.add(csv_path);
  prov.add(sum_path);
  prov.write(c.out);
  return {"baselines: " + std::to_string(cases.size()) + " cases x " + std::to_string(names.size()) + " methods"};
}

/// Case-level k-fold assignment from a seeded shuffle.
inline std::vector<int> fold_of_cases(std::size_t n, int folds, std::uint64_t seed) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  Rng rng(seed);
  rng.shuffle(idx);
  std::vector<int> f(n);
  for (std::size_t k = 0; k < n; ++k) f[idx[k]] = static_cast<int>(k % static_cast<std::size_t>(folds));
  return f;
}

struct EvaluationResult {
  vio::MetricsReport report;
  json summary;
};

/// Cross-validated comparison of the cascade (coarse stage and full
/// pipeline) with every baseline against ground truth.
inline EvaluationResult evaluate(const std::vector<LabeledCase>& cases, const RunConfig& c,
                                 const std::function<void(const std::string&)>& log = {}) {
  const auto n = cases.size();
  if (n < static_cast<std::size_t>(c.folds)) throw ConfigError("evaluate: fewer cases than folds");
  for (const auto& cs : cases)
    if (!cs.gt_scar && !cs.gt_mvo) throw NoGroundTruth("evaluate: case " + cs.case_id + " has no ground truth");
  const auto fold = fold_of_cases(n, c.folds, c.seeds.split);
  std::vector<std::string> methods{"coarse", "proposed"};
  for (const auto& m : baselines::method_names()) methods.push_back(m);
  std::vector<std::vector<vio::ReportRow>> rows(n);
  std::vector<std::vector<std::string>> warnings(n);

  for (int f = 0; f < c.folds; ++f) {
    std::vector<LabeledCase> train;
    std::vector<std::size_t> test;
    for (std::size_t i = 0; i < n; ++i) (fold[i] == f ? test.push_back(i) : train.push_back(cases[i]));
    std::optional<segment::PatchEnsemble> ens;
    if (c.segment.refine)
      ens = segment::train_ensemble(train, c.refine, derive_seed(c.seeds.refine, static_cast<std::uint64_t>(f)), c.jobs);
    std::optional<detect::DetectionModel> det;
    if (c.use_detect) det = fit_detector(train, c, derive_seed(c.seeds.detect, static_cast<std::uint64_t>(f)));
    parallel_for(test.size(), c.jobs, [&](std::size_t t) {
      const auto i = test[t];
      const auto& cs = cases[i];
      std::optional<std::vector<SliceLabel>> gate;
      if (det) gate = detect::gate_labels(detect::detect_predict(*det, cs));
      const auto* g = gate ? &*gate : nullptr;
      auto coarse_opt = c.segment;
      coarse_opt.refine = false;
      const auto coarse = segment::segment_case(cs, g, nullptr, coarse_opt);
      const auto full = c.segment.refine ? segment::segment_case(cs, g, &*ens, c.segment) : coarse;
      const auto base = baselines::run_all(cs);
      rows[i].push_back(case_row(cs, "coarse", coarse.final_mask));
      rows[i].push_back(case_row(cs, "proposed", full.final_mask));
      for (std::size_t k = 0; k < base.masks.size(); ++k)
        rows[i].push_back(case_row(cs, baselines::method_names()[k], base.masks[k]));
      warnings[i] = full.warnings;
      for (const auto& w : base.warnings) warnings[i].push_back(w);
    });
    if (log) log("fold " + std::to_string(f + 1) + "/" + std::to_string(c.folds) + " done");
  }

  EvaluationResult out;
  for (const auto& r : rows) out.report.rows.insert(out.report.rows.end(), r.begin(), r.end());

  auto column = [&](std::size_t m, auto field, const std::vector<std::size_t>* subset = nullptr) {
    std::vector<double> v;
    for (std::size_t i = 0; i < n; ++i) {
      if (subset && std::find(subset->begin(), subset->end(), i) == subset->end()) continue;
      const auto& x = rows[i][m].*field;
      if (x) v.push_back(*x);
    }
    return v;
  };
  std::vector<double> gt_volume;
  for (const auto& cs : cases) gt_volume.push_back(metrics::scar_volume_cm3(cs.gt_infarct()));

  json per_method = json::object();
  for (std::size_t m = 0; m < methods.size(); ++m) {
    const auto vol = column(m, &vio::ReportRow::scar_volume_cm3);
    json s{{"dice_pct", describe(column(m, &vio::ReportRow::dice_pct))},
           {"hausdorff_mm", describe(column(m, &vio::ReportRow::hausdorff_mm))},
           {"scar_volume_cm3", describe(vol)},
           {"pct_infarct", describe(column(m, &vio::ReportRow::pct_infarct))},
           {"mvo_sensitivity", describe(column(m, &vio::ReportRow::mvo_sensitivity))}};
    s["volume_bland_altman"] = try_stat([&]() -> json {
      const auto [b, sd] = metrics::bland_altman(gt_volume, vol);
      return {{"bias_mean", b}, {"bias_sd", sd}};
    });
    s["volume_spearman"] = try_stat([&]() -> json { return metrics::spearman(gt_volume, vol); });
    per_method[methods[m]] = s;
  }
  json folds = json::array();
  for (int f = 0; f < c.folds; ++f) {
    std::vector<std::size_t> in;
    for (std::size_t i = 0; i < n; ++i)
      if (fold[i] == f) in.push_back(i);
    folds.push_back({{"cases", in.size()},
                     {"coarse_dice_pct", metrics::mean(column(0, &vio::ReportRow::dice_pct, &in))},
                     {"proposed_dice_pct", metrics::mean(column(1, &vio::ReportRow::dice_pct, &in))}});
  }
  const auto coarse_dice = column(0, &vio::ReportRow::dice_pct), full_dice = column(1, &vio::ReportRow::dice_pct);
  json tests = json::object();
  tests["proposed_vs_coarse_dice_paired_t"] = try_stat([&]() -> json {
    const auto t = metrics::paired_t(full_dice, coarse_dice);
    return {{"t", t.statistic}, {"p", t.p_value}};
  });
  for (std::size_t m = 2; m < methods.size(); ++m)
    tests["proposed_vs_" + methods[m] + "_dice_mann_whitney"] = try_stat([&]() -> json {
      const auto t = metrics::mann_whitney_u(full_dice, column(m, &vio::ReportRow::dice_pct));
      return {{"u", t.statistic}, {"p", t.p_value}};
    });
  json warn = json::object();
  for (std::size_t i = 0; i < n; ++i)
    if (!warnings[i].empty()) warn[cases[i].case_id] = warnings[i];
  out.summary = {{"cases", n}, {"folds", folds}, {"methods", per_method}, {"tests", tests}, {"warnings", warn}};
  return out;
}

inline Outcome run_evaluate(const RunConfig& c) {
  const auto cases = load_cases(c);
  const auto r = evaluate(cases, c);
  fs::create_directories(c.out);
  const auto csv_path = c.out / "evaluate.csv", sum_path = c.out / "evaluate_summary.json";
  vio::write_report(r.report, csv_path);
  vio::write_json(sum_path, r.summary);
  Provenance prov(c, Command::evaluate);
  prov.add(csv_path);
  prov.add(sum_path);
  prov.write(c.out);
  const auto& m = r.summary["methods"];
  std::ostringstream s;
  s << "evaluate: " << cases.size() << " cases, mean Dice coarse " << m["coarse"]["dice_pct"]["mean"] << " proposed "
    << m["proposed"]["dice_pct"]["mean"];
  return {s.str()};
}

inline Outcome run_permtest(const RunConfig& c) {
  const auto cases = load_cases(c);
  const auto set = detect::build_slice_set(cases, c.detect.input);
  const auto r = detect::permutation_test(set, c.permutation_splits, c.detect, c.seeds.permtest, c.jobs);
  std::ostringstream csv;
  csv << "split,auc_unpermuted,auc_permuted\n";
  for (int i = 0; i < r.n; ++i)
    csv << i << ',' << vio::format_fixed4(r.auc_unpermuted[static_cast<std::size_t>(i)]) << ','
        << vio::format_fixed4(r.auc_permuted[static_cast<std::size_t>(i)]) << '\n';
  fs::create_directories(c.out);
  const auto csv_path = c.out / "permtest.csv", sum_path = c.out / "permtest_summary.json";
  write_text(csv_path, csv.str());
  vio::write_json(sum_path, {{"n", r.n},
                             {"slices", set.data.size()},
                             {"p", r.p},
                             {"auc_unpermuted", describe(r.auc_unpermuted)},
                             {"auc_permuted", describe(r.auc_permuted)}});
  Provenance prov(c, Command::permtest);
  prov.add(csv_path);
  prov.add(sum_path);
  prov.write(c.out);
  std::ostringstream s;
  s << "permtest: N=" << r.n << " mean AUC " << metrics::mean(r.auc_unpermuted) << " p=" << r.p;
  return {s.str()};
}

inline Outcome run(Command cmd, const RunConfig& c) {
  validate(c, cmd);
  switch (cmd) {
    case Command::phantom_gen: return run_phantom_gen(c);
    case Command::train_detect: return run_train_detect(c);
    case Command::train_refine: return run_train_refine(c);
    case Command::detect: return run_detect(c);
    case Command::segment: return run_segment(c);
    case Command::baselines: return run_baselines(c);
    case Command::evaluate: return run_evaluate(c);
    case Command::permtest: return run_permtest(c);
  }
  throw ConfigError("unknown command");
}

}  // namespace lgeq::cli
