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

#ifndef TFI_DATA_HPP_
#define TFI_DATA_HPP_

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include "tfi/errors.hpp"
#include "tfi/random.hpp"
#include "tfi/tensor.hpp"

namespace tfi {

struct Dataset {
  Shape sample_shape;
  std::size_t classes = 0;
  std::vector<Tensor> images;
  std::vector<int> labels;

  std::size_t size() const { return images.size(); }
};

struct DatasetSplits {
  Dataset train;
  Dataset test;
  // Held out from both train and test; used for structural probing.
  Dataset probe;
};

// "Textured shapes": class k draws shape k % 4 (disk, square, triangle,
// cross) with texture k / 4 (solid, striped) at a jittered position and
// size, random colors and pixel noise.
struct ProceduralSpec {
  std::size_t train_size = 1600;
  std::size_t test_size = 800;
  std::size_t probe_size = 64;
  std::size_t image_size = 16;
  std::size_t classes = 8;
  double noise = 0.05;
  std::uint64_t seed = 7;

  friend bool operator==(const ProceduralSpec&, const ProceduralSpec&) = default;
};

namespace detail {

inline Tensor RenderShape(int label, std::size_t n, double noise, Rng& rng) {
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  const double scale = static_cast<double>(n) / 16.0;
  const double cy = (6.0 + 3.0 * u01(rng)) * scale;
  const double cx = (6.0 + 3.0 * u01(rng)) * scale;
  const double r = (3.0 + 2.0 * u01(rng)) * scale;
  double bg[3], fg[3];
  for (int c = 0; c < 3; ++c) {
    bg[c] = 0.45 * u01(rng);
    fg[c] = 0.55 + 0.45 * u01(rng);
  }
  const int shape = label % 4;
  const bool striped = (label / 4) % 2 == 1;
  const double period = 3.0 * scale;
  std::normal_distribution<double> gauss(0.0, noise);
  Tensor img({3, n, n});
  for (std::size_t y = 0; y < n; ++y) {
    for (std::size_t x = 0; x < n; ++x) {
      const double dy = static_cast<double>(y) - cy, dx = static_cast<double>(x) - cx;
      bool inside = false;
      switch (shape) {
        case 0: inside = dy * dy + dx * dx <= r * r; break;
        case 1: inside = std::abs(dy) <= 0.8 * r && std::abs(dx) <= 0.8 * r; break;
        case 2: inside = dy >= -r && dy <= r && std::abs(dx) <= 0.5 * (dy + r); break;
        default:
          inside = (std::abs(dy) <= scale && std::abs(dx) <= r) ||
                   (std::abs(dx) <= scale && std::abs(dy) <= r);
      }
      double mix = inside ? 1.0 : 0.0;
      if (inside && striped && std::fmod(static_cast<double>(y), period) >= period / 2) mix = 0.35;
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = mix * fg[c] + (1.0 - mix) * bg[c] + gauss(rng);
        img.at(c, y, x) = std::clamp(v, 0.0, 1.0);
      }
    }
  }
  return img;
}

inline Dataset RenderSplit(const ProceduralSpec& spec, std::size_t count, std::string_view tag) {
  Dataset d;
  d.sample_shape = {3, spec.image_size, spec.image_size};
  d.classes = spec.classes;
  Rng rng = MakeRng(spec.seed, tag);
  std::vector<int> labels(count);
  for (std::size_t i = 0; i < count; ++i) labels[i] = static_cast<int>(i % spec.classes);
  std::shuffle(labels.begin(), labels.end(), rng);
  for (int label : labels) {
    d.images.push_back(RenderShape(label, spec.image_size, spec.noise, rng));
    d.labels.push_back(label);
  }
  return d;
}

inline std::uint32_t ReadBigEndian32(std::istream& in) {
  unsigned char b[4];
  if (!in.read(reinterpret_cast<char*>(b), 4)) throw ConfigError("truncated IDX header");
  return (std::uint32_t{b[0]} << 24) | (std::uint32_t{b[1]} << 16) | (std::uint32_t{b[2]} << 8) |
         std::uint32_t{b[3]};
}

}  // namespace detail

inline DatasetSplits MakeProcedural(const ProceduralSpec& spec) {
  if (spec.classes < 2 || spec.classes > 8) throw ConfigError("procedural classes must be in [2, 8]");
  if (spec.image_size < 8 || spec.image_size % 4 != 0) {
    throw ConfigError("procedural image_size must be a multiple of 4, at least 8");
  }
  if (spec.train_size == 0 || spec.test_size == 0 || spec.probe_size == 0) {
    throw ConfigError("procedural split sizes must be positive");
  }
  return {detail::RenderSplit(spec, spec.train_size, "train"),
          detail::RenderSplit(spec, spec.test_size, "test"),
          detail::RenderSplit(spec, spec.probe_size, "probe")};
}

// Reads an IDX image file (magic 0x00000803, unsigned bytes) and its label
// file (magic 0x00000801). Pixels are scaled to [0, 1] as [1, H, W].
inline Dataset ReadIdx(const std::filesystem::path& images_path,
                       const std::filesystem::path& labels_path) {
  std::ifstream images(images_path, std::ios::binary);
  std::ifstream labels(labels_path, std::ios::binary);
  if (!images) throw ConfigError("cannot open " + images_path.string());
  if (!labels) throw ConfigError("cannot open " + labels_path.string());
  if (detail::ReadBigEndian32(images) != 0x00000803) throw ConfigError("bad IDX image magic");
  if (detail::ReadBigEndian32(labels) != 0x00000801) throw ConfigError("bad IDX label magic");
  const std::uint32_t n = detail::ReadBigEndian32(images);
  const std::uint32_t h = detail::ReadBigEndian32(images);
  const std::uint32_t w = detail::ReadBigEndian32(images);
  if (detail::ReadBigEndian32(labels) != n) throw ConfigError("IDX image/label counts differ");
  if (n == 0 || h == 0 || w == 0) throw ConfigError("empty IDX file");
  Dataset d;
  d.sample_shape = {1, h, w};
  std::vector<unsigned char> buf(static_cast<std::size_t>(h) * w);
  int max_label = 0;
  for (std::uint32_t i = 0; i < n; ++i) {
    if (!images.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()))) {
      throw ConfigError("truncated IDX image data");
    }
    Tensor img(d.sample_shape);
    for (std::size_t k = 0; k < buf.size(); ++k) img[k] = buf[k] / 255.0;
    d.images.push_back(std::move(img));
    char label = 0;
    if (!labels.get(label)) throw ConfigError("truncated IDX label data");
    d.labels.push_back(static_cast<unsigned char>(label));
    max_label = std::max(max_label, d.labels.back());
  }
  d.classes = static_cast<std::size_t>(max_label) + 1;
  return d;
}

}  // namespace tfi

#endif  // TFI_DATA_HPP_
