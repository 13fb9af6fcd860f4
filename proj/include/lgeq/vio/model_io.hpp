#pragma once

// JSON model files. Parameter blocks are base64 of little-endian float64
// values, tagged with their shape.

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "lgeq/learn/margin.hpp"
#include "lgeq/learn/net.hpp"
#include "lgeq/learn/pca.hpp"

namespace lgeq::vio {

inline std::string base64_encode(const std::uint8_t* data, std::size_t n) {
  static constexpr char table[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((n + 2) / 3 * 4);
  for (std::size_t i = 0; i < n; i += 3) {
    std::uint32_t v = static_cast<std::uint32_t>(data[i]) << 16;
    if (i + 1 < n) v |= static_cast<std::uint32_t>(data[i + 1]) << 8;
    if (i + 2 < n) v |= data[i + 2];
    out.push_back(table[(v >> 18) & 63]);
    out.push_back(table[(v >> 12) & 63]);
    out.push_back(i + 1 < n ? table[(v >> 6) & 63] : '=');
    out.push_back(i + 2 < n ? table[v & 63] : '=');
  }
  return out;
}

inline std::vector<std::uint8_t> base64_decode(const std::string& s) {
  auto value = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  if (s.size() % 4 != 0) throw FormatError("base64: length is not a multiple of 4");
  std::vector<std::uint8_t> out;
  out.reserve(s.size() / 4 * 3);
  for (std::size_t i = 0; i < s.size(); i += 4) {
    std::array<int, 4> v{};
    int pad = 0;
    for (int j = 0; j < 4; ++j) {
      const char c = s[i + static_cast<std::size_t>(j)];
      if (c == '=') {
        v[static_cast<std::size_t>(j)] = 0;
        ++pad;
      } else {
        if (pad) throw FormatError("base64: data after padding");
        v[static_cast<std::size_t>(j)] = value(c);
        if (v[static_cast<std::size_t>(j)] < 0) throw FormatError("base64: invalid character");
      }
    }
    const std::uint32_t w = (static_cast<std::uint32_t>(v[0]) << 18) | (static_cast<std::uint32_t>(v[1]) << 12) |
                            (static_cast<std::uint32_t>(v[2]) << 6) | static_cast<std::uint32_t>(v[3]);
    out.push_back(static_cast<std::uint8_t>(w >> 16));
    if (pad < 2) out.push_back(static_cast<std::uint8_t>(w >> 8));
    if (pad < 1) out.push_back(static_cast<std::uint8_t>(w));
  }
  return out;
}

inline nlohmann::json encode_f64(const double* data, std::size_t n, std::vector<std::int64_t> shape) {
  static_assert(std::endian::native == std::endian::little);
  return {{"shape", shape}, {"f64le", base64_encode(reinterpret_cast<const std::uint8_t*>(data), n * sizeof(double))}};
}

inline std::vector<double> decode_f64(const nlohmann::json& j, std::size_t expected) {
  const auto bytes = base64_decode(j.at("f64le").get<std::string>());
  if (bytes.size() != expected * sizeof(double)) throw FormatError("model: parameter block has the wrong length");
  std::vector<double> out(expected);
  std::memcpy(out.data(), bytes.data(), bytes.size());
  for (double v : out)
    if (!std::isfinite(v)) throw FormatError("model: non-finite parameter");
  return out;
}

inline nlohmann::json architecture_to_json(const learn::Architecture& a) {
  nlohmann::json layers = nlohmann::json::array();
  for (const auto& l : a.layers) {
    using K = learn::LayerSpec::Kind;
    switch (l.kind) {
      case K::conv: layers.push_back({{"type", "conv"}, {"channels", l.units}, {"kernel", l.kernel}}); break;
      case K::relu: layers.push_back({{"type", "relu"}}); break;
      case K::maxpool: layers.push_back({{"type", "maxpool"}}); break;
      case K::dense: layers.push_back({{"type", "dense"}, {"units", l.units}}); break;
      case K::dropout: layers.push_back({{"type", "dropout"}, {"rate", l.rate}}); break;
      case K::softmax: layers.push_back({{"type", "softmax"}}); break;
    }
  }
  return {{"input", {a.input.c, a.input.h, a.input.w}}, {"layers", layers}};
}

inline learn::Architecture architecture_from_json(const nlohmann::json& j) {
  learn::Architecture a;
  const auto& in = j.at("input");
  a.input = {in.at(0).get<int>(), in.at(1).get<int>(), in.at(2).get<int>()};
  for (const auto& l : j.at("layers")) {
    const auto type = l.at("type").get<std::string>();
    if (type == "conv")
      a.layers.push_back(learn::conv(l.at("channels").get<int>(), l.at("kernel").get<int>()));
    else if (type == "relu")
      a.layers.push_back(learn::relu());
    else if (type == "maxpool")
      a.layers.push_back(learn::maxpool());
    else if (type == "dense")
      a.layers.push_back(learn::dense(l.at("units").get<int>()));
    else if (type == "dropout")
      a.layers.push_back(learn::dropout(l.at("rate").get<double>()));
    else if (type == "softmax")
      a.layers.push_back(learn::softmax());
    else
      throw FormatError("model: unknown layer type " + type);
  }
  return a;
}

inline nlohmann::json net_to_json(const learn::Net& net) {
  const auto& p = net.params();
  return {{"architecture", architecture_to_json(net.architecture())},
          {"params", encode_f64(p.data(), p.size(), {static_cast<std::int64_t>(p.size())})}};
}

inline learn::Net net_from_json(const nlohmann::json& j) {
  try {
    learn::Net net(architecture_from_json(j.at("architecture")));
    const auto p = decode_f64(j.at("params"), net.params().size());
    net.params().assign(p.begin(), p.end());
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(std::string("model: ") + e.what());
  }
}

inline nlohmann::json pca_to_json(const learn::PcaModel& m) {
  // axes stored column-major (Eigen default) as D x K.
  return {{"mean", encode_f64(m.mean.data(), static_cast<std::size_t>(m.mean.size()), {m.mean.size()})},
          {"axes", encode_f64(m.axes.data(), static_cast<std::size_t>(m.axes.size()), {m.axes.rows(), m.axes.cols()})},
          {"variances", encode_f64(m.variances.data(), static_cast<std::size_t>(m.variances.size()), {m.variances.size()})},
          {"total_variance", m.total_variance}};
}

inline learn::PcaModel pca_from_json(const nlohmann::json& j) {
  learn::PcaModel m;
  const auto d = j.at("axes").at("shape").at(0).get<Eigen::Index>();
  const auto k = j.at("axes").at("shape").at(1).get<Eigen::Index>();
  auto mean = decode_f64(j.at("mean"), static_cast<std::size_t>(d));
  auto axes = decode_f64(j.at("axes"), static_cast<std::size_t>(d * k));
  auto var = decode_f64(j.at("variances"), static_cast<std::size_t>(k));
  m.mean = Eigen::Map<Eigen::VectorXd>(mean.data(), d);
  m.axes = Eigen::Map<Eigen::MatrixXd>(axes.data(), d, k);
  m.variances = Eigen::Map<Eigen::VectorXd>(var.data(), k);
  m.total_variance = j.at("total_variance").get<double>();
  return m;
}

inline nlohmann::json margin_to_json(const learn::MarginModel& m) {
  return {{"w", encode_f64(m.w.data(), static_cast<std::size_t>(m.w.size()), {m.w.size()})},
          {"b", m.b},
          {"lambda", m.lambda}};
}

inline learn::MarginModel margin_from_json(const nlohmann::json& j) {
  learn::MarginModel m;
  const auto n = j.at("w").at("shape").at(0).get<Eigen::Index>();
  auto w = decode_f64(j.at("w"), static_cast<std::size_t>(n));
  m.w = Eigen::Map<Eigen::VectorXd>(w.data(), n);
  m.b = j.at("b").get<double>();
  m.lambda = j.at("lambda").get<double>();
  return m;
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(1) << '\n';
  if (!out) throw IoError("write failed: " + path.string());
}

inline nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  try {
    return nlohmann::json::parse(in);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.string() + ": " + e.what());
  }
}

inline void save_net(const std::filesystem::path& path, const learn::Net& net) {
  write_json(path, {{"format", "lgeq-net"}, {"version", 1}, {"net", net_to_json(net)}});
}

inline learn::Net load_net(const std::filesystem::path& path) {
  const auto j = read_json(path);
  if (j.value("format", "") != "lgeq-net") throw FormatError(path.string() + ": not a network file");
  return net_from_json(j.at("net"));
}

}  // namespace lgeq::vio
