// Copyright 2026 The tfisim Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef TFI_IO_HPP_
#define TFI_IO_HPP_

// File formats: little-endian float64 blobs with JSON sidecars for
// parameter vectors and tensors, binary PGM/PPM image export, CSV number
// formatting.

#include <algorithm>
#include <array>
#include <bit>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "tfi/errors.hpp"
#include "tfi/net.hpp"
#include "tfi/random.hpp"
#include "tfi/tensor.hpp"

namespace tfi {

using Json = nlohmann::ordered_json;

// Shortest round-trip decimal form; "nan", "inf" and "-inf" for
// non-finite values.
inline std::string FormatNumber(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  std::array<char, 32> buf;
  auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

inline std::string ReadTextFile(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  return std::string(std::istreambuf_iterator<char>(in), {});
}

inline void WriteTextFile(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  out << text;
  if (!out) throw Error("cannot write " + path.string());
}

inline Json ReadJsonFile(const std::filesystem::path& path) {
  try {
    return Json::parse(ReadTextFile(path));
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError(path.string() + ": " + e.what());
  }
}

inline void WriteJsonFile(const std::filesystem::path& path, const Json& j) {
  WriteTextFile(path, j.dump(2) + "\n");
}

inline void WriteFloat64Blob(const std::filesystem::path& path, std::span<const double> values) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  for (double v : values) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    unsigned char bytes[8];
    for (int b = 0; b < 8; ++b) bytes[b] = static_cast<unsigned char>(bits >> (8 * b));
    out.write(reinterpret_cast<const char*>(bytes), 8);
  }
  if (!out) throw Error("cannot write " + path.string());
}

inline std::vector<double> ReadFloat64Blob(const std::filesystem::path& path, std::size_t count) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot open " + path.string());
  std::vector<double> out(count);
  for (double& v : out) {
    unsigned char bytes[8];
    if (!in.read(reinterpret_cast<char*>(bytes), 8)) {
      throw ConfigError(path.string() + ": blob shorter than its sidecar length");
    }
    std::uint64_t bits = 0;
    for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[b]) << (8 * b);
    v = std::bit_cast<double>(bits);
  }
  if (in.peek() != std::char_traits<char>::eof()) {
    throw ConfigError(path.string() + ": blob longer than its sidecar length");
  }
  return out;
}

// Writes <stem>.bin and <stem>.json.
inline void SaveParams(const std::filesystem::path& stem, const Network& net) {
  const std::vector<double>& values = net.params().values;
  std::filesystem::path bin = stem, side = stem;
  bin += ".bin";
  side += ".json";
  WriteFloat64Blob(bin, values);
  Json segments = Json::array();
  for (const ParamSegment& s : net.arch().layout().segments) {
    segments.push_back({{"node", s.node},
                        {"offset", s.offset},
                        {"weight_length", s.weight_length},
                        {"bias_length", s.bias_length}});
  }
  WriteJsonFile(side, {{"format", "tfi-params"},
                       {"version", 1},
                       {"dtype", "float64-le"},
                       {"length", values.size()},
                       {"blob", bin.filename().string()},
                       {"architecture", net.arch().Describe()},
                       {"segments", segments}});
}

inline Network LoadParams(const std::filesystem::path& stem) {
  std::filesystem::path side = stem;
  side += ".json";
  const Json meta = ReadJsonFile(side);
  if (meta.value("format", "") != "tfi-params") throw ConfigError(side.string() + ": not a parameter sidecar");
  auto arch = std::make_shared<const ArchitectureGraph>(
      ArchitectureGraph::Parse(meta.at("architecture").get<std::string>()));
  const auto length = meta.at("length").get<std::size_t>();
  if (length != arch->param_count()) throw ShapeError(side.string() + ": length does not fit architecture");
  std::vector<double> values =
      ReadFloat64Blob(stem.parent_path() / meta.at("blob").get<std::string>(), length);
  return Network(arch, ParamVector{std::move(values), arch->shared_layout()});
}

inline void SaveTensor(const std::filesystem::path& stem, const Tensor& t) {
  std::filesystem::path bin = stem, side = stem;
  bin += ".bin";
  side += ".json";
  WriteFloat64Blob(bin, t.values());
  WriteJsonFile(side, {{"format", "tfi-tensor"},
                       {"version", 1},
                       {"dtype", "float64-le"},
                       {"shape", t.shape()},
                       {"blob", bin.filename().string()}});
}

inline Tensor LoadTensor(const std::filesystem::path& stem) {
  std::filesystem::path side = stem;
  side += ".json";
  const Json meta = ReadJsonFile(side);
  if (meta.value("format", "") != "tfi-tensor") throw ConfigError(side.string() + ": not a tensor sidecar");
  const auto shape = meta.at("shape").get<Shape>();
  return Tensor(shape, ReadFloat64Blob(stem.parent_path() / meta.at("blob").get<std::string>(),
                                       ShapeSize(shape)));
}

// Binary PGM for one channel, PPM for three; [lo, hi] maps to [0, 255].
inline void WritePnm(const std::filesystem::path& path, const Tensor& img, double lo, double hi) {
  if (img.rank() != 3 || (img.shape()[0] != 1 && img.shape()[0] != 3)) {
    throw ShapeError("PNM export needs a [1|3, H, W] tensor, got " + ShapeString(img.shape()));
  }
  if (!(hi > lo)) throw ConfigError("PNM export needs hi > lo");
  const std::size_t c = img.shape()[0], h = img.shape()[1], w = img.shape()[2];
  std::string data = (c == 1 ? "P5\n" : "P6\n") + std::to_string(w) + " " + std::to_string(h) + "\n255\n";
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < w; ++x)
      for (std::size_t ch = 0; ch < c; ++ch) {
        const double v = std::clamp((img.at(ch, y, x) - lo) / (hi - lo), 0.0, 1.0);
        data.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(v * 255.0))));
      }
  WriteTextFile(path, data);
}

// FNV-1a over the text, as 16 hex digits.
inline std::string HashHex(std::string_view text) {
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(HashTag(text)));
  return buf;
}

}  // namespace tfi

#endif  // TFI_IO_HPP_
