#pragma once

#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lgeq/core/case.hpp"
#include "lgeq/vio/metaimage.hpp"

namespace lgeq::vio {

/// On-disk description of one case. Paths are relative to the manifest.
struct CaseManifest {
  std::string case_id;
  std::filesystem::path volume;
  std::filesystem::path myocardium, endocardium, epicardium;
  std::optional<std::filesystem::path> gt_scar, gt_mvo, remote;
  std::vector<SliceLabel> per_slice_labels;
  std::filesystem::path base_dir;
};

inline std::string to_string(SliceLabel l) { return l == SliceLabel::diseased ? "diseased" : "healthy"; }

inline SliceLabel parse_slice_label(const std::string& s) {
  if (s == "healthy") return SliceLabel::healthy;
  if (s == "diseased") return SliceLabel::diseased;
  throw ManifestError("unknown slice label '" + s + "'");
}

inline nlohmann::json manifest_to_json(const CaseManifest& m) {
  nlohmann::json j;
  j["case_id"] = m.case_id;
  j["volume"] = m.volume.generic_string();
  j["myocardium"] = m.myocardium.generic_string();
  j["endocardium"] = m.endocardium.generic_string();
  j["epicardium"] = m.epicardium.generic_string();
  if (m.gt_scar) j["gt_scar"] = m.gt_scar->generic_string();
  if (m.gt_mvo) j["gt_mvo"] = m.gt_mvo->generic_string();
  if (m.remote) j["remote"] = m.remote->generic_string();
  if (!m.per_slice_labels.empty()) {
    auto& arr = j["per_slice_labels"] = nlohmann::json::array();
    for (auto l : m.per_slice_labels) arr.push_back(to_string(l));
  }
  return j;
}

inline void write_manifest(const std::filesystem::path& path, const CaseManifest& m) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  out << manifest_to_json(m).dump(2) << '\n';
}

/// Parses a manifest without touching the referenced files.
inline CaseManifest parse_manifest(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw ManifestError(path.string() + ": " + e.what());
  }
  CaseManifest m;
  m.base_dir = path.parent_path();
  auto req = [&](const char* key) -> std::string {
    if (!j.contains(key) || !j[key].is_string()) throw ManifestError(path.string() + ": missing '" + key + "'");
    return j[key].get<std::string>();
  };
  auto opt = [&](const char* key) -> std::optional<std::filesystem::path> {
    if (!j.contains(key) || j[key].is_null()) return std::nullopt;
    if (!j[key].is_string()) throw ManifestError(path.string() + ": '" + key + "' must be a string");
    return std::filesystem::path(j[key].get<std::string>());
  };
  m.case_id = req("case_id");
  m.volume = req("volume");
  m.myocardium = req("myocardium");
  m.endocardium = req("endocardium");
  m.epicardium = req("epicardium");
  m.gt_scar = opt("gt_scar");
  m.gt_mvo = opt("gt_mvo");
  m.remote = opt("remote");
  if (j.contains("per_slice_labels")) {
    if (!j["per_slice_labels"].is_array()) throw ManifestError(path.string() + ": per_slice_labels must be an array");
    for (const auto& v : j["per_slice_labels"]) m.per_slice_labels.push_back(parse_slice_label(v.get<std::string>()));
  }
  return m;
}

/// Loads a manifest and every file it references, verifying that all
/// masks share the volume's dims and spacing and that the label list has
/// one entry per slice. Throws ManifestError naming the first violation.
inline LabeledCase load_case(const CaseManifest& m) {
  auto resolve = [&](const std::filesystem::path& p) { return p.is_absolute() ? p : m.base_dir / p; };
  auto exists = [&](const std::filesystem::path& p) {
    if (!std::filesystem::exists(resolve(p))) throw ManifestError(m.case_id + ": missing file " + resolve(p).string());
  };
  exists(m.volume);
  LabeledCase c;
  c.case_id = m.case_id;
  c.image = read_volume(resolve(m.volume));
  auto load = [&](const std::filesystem::path& p, const char* role) {
    exists(p);
    Mask mask = read_mask(resolve(p));
    if (!(mask.dims() == c.image.dims())) throw ManifestError(m.case_id + ": " + role + " dims differ from volume");
    if (!(mask.spacing() == c.image.spacing()))
      throw ManifestError(m.case_id + ": " + role + " spacing differs from volume");
    return mask;
  };
  c.myocardium = load(m.myocardium, "myocardium");
  c.endocardium = load(m.endocardium, "endocardium");
  c.epicardium = load(m.epicardium, "epicardium");
  if (m.gt_scar) c.gt_scar = load(*m.gt_scar, "gt_scar");
  if (m.gt_mvo) c.gt_mvo = load(*m.gt_mvo, "gt_mvo");
  if (m.remote) c.remote = load(*m.remote, "remote");
  if (!m.per_slice_labels.empty() && static_cast<int>(m.per_slice_labels.size()) != c.nz())
    throw ManifestError(m.case_id + ": per_slice_labels length " + std::to_string(m.per_slice_labels.size()) +
                        " != nz " + std::to_string(c.nz()));
  if (c.gt_mvo && c.gt_scar) {
    for (std::size_t i = 0; i < c.gt_mvo->size(); ++i)
      if ((*c.gt_mvo)[i] && (*c.gt_scar)[i]) throw ManifestError(m.case_id + ": gt_mvo overlaps gt_scar");
  }
  c.slice_labels = m.per_slice_labels;
  return c;
}

inline LabeledCase read_manifest(const std::filesystem::path& path) { return load_case(parse_manifest(path)); }

/// Writes the case's volume and masks next to `manifest_path` as
/// `<case_id>_<role>.mhd` and then the manifest itself.
inline CaseManifest write_case(const std::filesystem::path& manifest_path, const LabeledCase& c) {
  const auto dir = manifest_path.parent_path();
  std::filesystem::create_directories(dir.empty() ? std::filesystem::path(".") : dir);
  CaseManifest m;
  m.case_id = c.case_id;
  m.base_dir = dir;
  auto name = [&](const char* role) { return std::filesystem::path(c.case_id + "_" + role + ".mhd"); };
  m.volume = name("image");
  write_volume(dir / m.volume, c.image);
  m.myocardium = name("myocardium");
  write_mask(dir / m.myocardium, c.myocardium);
  m.endocardium = name("endocardium");
  write_mask(dir / m.endocardium, c.endocardium);
  m.epicardium = name("epicardium");
  write_mask(dir / m.epicardium, c.epicardium);
  if (c.gt_scar) {
    m.gt_scar = name("gt_scar");
    write_mask(dir / *m.gt_scar, *c.gt_scar);
  }
  if (c.gt_mvo) {
    m.gt_mvo = name("gt_mvo");
    write_mask(dir / *m.gt_mvo, *c.gt_mvo);
  }
  if (c.remote) {
    m.remote = name("remote");
    write_mask(dir / *m.remote, *c.remote);
  }
  m.per_slice_labels = c.slice_labels;
  write_manifest(manifest_path, m);
  return m;
}

}  // namespace lgeq::vio
