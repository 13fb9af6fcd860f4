#pragma once

// MetaImage-compatible subset: a text header of `Key = Value` lines and a
// raw little-endian payload stored next to it, x fastest, then y, then z.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "lgeq/core/grid.hpp"

namespace lgeq::vio {

static_assert(std::endian::native == std::endian::little, "payload codec assumes a little-endian host");

enum class ElementType { met_float, met_uchar };

struct MetaHeader {
  Dims3 dims;
  Spacing3 spacing;
  ElementType type = ElementType::met_float;
  std::string data_file;
};

namespace detail {

inline std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

inline MetaHeader parse_header(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    kv[trim(line.substr(0, eq))] = trim(line.substr(eq + 1));
  }
  auto need = [&](const std::string& key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) throw FormatError(path.string() + ": missing key " + key);
    return it->second;
  };

  MetaHeader h;
  if (need("NDims") != "3") throw FormatError(path.string() + ": NDims must be 3");
  {
    std::istringstream ss(need("DimSize"));
    if (!(ss >> h.dims.nx >> h.dims.ny >> h.dims.nz) || h.dims.nx < 1 || h.dims.ny < 1 || h.dims.nz < 1)
      throw FormatError(path.string() + ": bad DimSize");
  }
  {
    auto it = kv.find("ElementSpacing");
    if (it == kv.end()) it = kv.find("ElementSize");
    if (it == kv.end()) throw FormatError(path.string() + ": missing key ElementSpacing");
    std::istringstream ss(it->second);
    if (!(ss >> h.spacing.sx >> h.spacing.sy >> h.spacing.sz) ||
        !(h.spacing.sx > 0 && h.spacing.sy > 0 && h.spacing.sz > 0))
      throw FormatError(path.string() + ": bad ElementSpacing");
  }
  const std::string& type = need("ElementType");
  if (type == "MET_FLOAT")
    h.type = ElementType::met_float;
  else if (type == "MET_UCHAR")
    h.type = ElementType::met_uchar;
  else
    throw UnsupportedElementType(path.string() + ": element type " + type);
  for (const char* key : {"BinaryDataByteOrderMSB", "ElementByteOrderMSB"}) {
    auto it = kv.find(key);
    if (it != kv.end() && it->second == "True") throw UnsupportedElementType(path.string() + ": big-endian payload");
  }
  if (auto it = kv.find("CompressedData"); it != kv.end() && it->second == "True")
    throw UnsupportedElementType(path.string() + ": compressed payload");
  h.data_file = need("ElementDataFile");
  if (h.data_file == "LOCAL") throw FormatError(path.string() + ": inline payloads are not supported");
  return h;
}

template <class T>
std::vector<T> read_payload(const std::filesystem::path& header_path, const MetaHeader& h) {
  const auto raw_path = header_path.parent_path() / h.data_file;
  std::ifstream in(raw_path, std::ios::binary);
  if (!in) throw IoError("cannot open payload " + raw_path.string());
  std::vector<T> data(h.dims.count());
  const auto bytes = static_cast<std::streamsize>(data.size() * sizeof(T));
  in.read(reinterpret_cast<char*>(data.data()), bytes);
  if (in.gcount() != bytes) throw FormatError(raw_path.string() + ": payload shorter than DimSize");
  return data;
}

template <class T>
void write_files(const std::filesystem::path& header_path, const Grid3D<T>& grid, const char* type_name) {
  const auto raw_name = header_path.stem().string() + ".raw";
  {
    std::ofstream out(header_path, std::ios::trunc);
    if (!out) throw IoError("cannot write " + header_path.string());
    out.precision(17);
    const auto& d = grid.dims();
    const auto& s = grid.spacing();
    out << "ObjectType = Image\n"
        << "NDims = 3\n"
        << "BinaryData = True\n"
        << "BinaryDataByteOrderMSB = False\n"
        << "CompressedData = False\n"
        << "DimSize = " << d.nx << ' ' << d.ny << ' ' << d.nz << '\n'
        << "ElementSpacing = " << s.sx << ' ' << s.sy << ' ' << s.sz << '\n'
        << "ElementType = " << type_name << '\n'
        << "ElementDataFile = " << raw_name << '\n';
    if (!out) throw IoError("write failed: " + header_path.string());
  }
  std::ofstream out(header_path.parent_path() / raw_name, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write payload for " + header_path.string());
  out.write(reinterpret_cast<const char*>(grid.raw().data()),
            static_cast<std::streamsize>(grid.raw().size() * sizeof(T)));
  if (!out) throw IoError("payload write failed for " + header_path.string());
}

}  // namespace detail

inline MetaHeader read_header(const std::filesystem::path& path) { return detail::parse_header(path); }

/// Reads a MET_FLOAT volume; MET_UCHAR payloads are widened.
inline Volume read_volume(const std::filesystem::path& path) {
  const MetaHeader h = detail::parse_header(path);
  if (h.type == ElementType::met_float) {
    auto data = detail::read_payload<float>(path, h);
    if (!all_finite(data)) throw FormatError(path.string() + ": non-finite voxel values");
    return Volume(h.dims, h.spacing, std::move(data));
  }
  auto bytes = detail::read_payload<std::uint8_t>(path, h);
  return Volume(h.dims, h.spacing, std::vector<float>(bytes.begin(), bytes.end()));
}

inline void write_volume(const std::filesystem::path& path, const Volume& v) {
  detail::write_files(path, v, "MET_FLOAT");
}

/// Masks are MET_UCHAR with values {0, 1}; any nonzero byte reads as 1.
inline Mask read_mask(const std::filesystem::path& path) {
  const MetaHeader h = detail::parse_header(path);
  if (h.type != ElementType::met_uchar) throw UnsupportedElementType(path.string() + ": masks must be MET_UCHAR");
  auto data = detail::read_payload<std::uint8_t>(path, h);
  for (auto& b : data) b = b ? 1 : 0;
  return Mask(h.dims, h.spacing, std::move(data));
}

inline void write_mask(const std::filesystem::path& path, const Mask& m) {
  Mask clean = m;
  for (auto& b : clean.raw()) b = b ? 1 : 0;
  detail::write_files(path, clean, "MET_UCHAR");
}

}  // namespace lgeq::vio
