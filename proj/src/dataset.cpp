// Copyright (c) 2026 FixRes Lab Contributors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include "fixres/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include "fixres/rng.hpp"

namespace fixres {

namespace {

constexpr double kForeground = 220.0;
constexpr double kBackground = 30.0;
constexpr int kSubgrid = 4;  // 4x4 coverage supersampling per pixel

// Shape predicates over object-box coordinates (u, v) in [-1, 1]^2. Fill
// fractions are pairwise distinct so classes stay separable by intensity
// statistics alone even under random placement.
bool shape_inside(int64_t shape, double u, double v) {
  switch (shape) {
    case 0:  // square, fill 1.0
      return true;
    case 1:  // disk, fill 0.785
      return u * u + v * v <= 1.0;
    case 2:  // plus cross, fill 0.664
      return std::abs(u) <= 0.42 || std::abs(v) <= 0.42;
    case 3:  // ring, fill 0.589
      return u * u + v * v <= 1.0 && u * u + v * v >= 0.25;
    case 4: {  // 3x3 checkerboard, fill 5/9
      const int cu = std::min(2, static_cast<int>((u + 1.0) * 1.5));
      const int cv = std::min(2, static_cast<int>((v + 1.0) * 1.5));
      return (cu + cv) % 2 == 0;
    }
    case 5:  // triangle, apex up, fill 0.5
      return std::abs(u) <= (v + 1.0) * 0.5;
    case 6:  // two horizontal bars, fill 0.45
      return (v >= -0.8 && v <= -0.35) || (v >= 0.35 && v <= 0.8);
    case 7:  // diamond, fill 0.405
      return std::abs(u) + std::abs(v) <= 0.9;
    case 8:  // two vertical bars, fill 0.35
      return (u >= -0.8 && u <= -0.45) || (u >= 0.45 && u <= 0.8);
    case 9:  // diagonal cross, fill 2t - t^2 = 0.30 at band half-width t
      return std::abs(u - v) <= 0.1633 || std::abs(u + v) <= 0.1633;
    default:
      return false;
  }
}

void render_sample(int64_t shape, int64_t res, double scale, double cx, double cy,
                   double noise_sigma, Rng& rng, uint8_t* out, int64_t channels) {
  const double half = scale * static_cast<double>(res) * 0.5;
  for (int64_t y = 0; y < res; ++y) {
    for (int64_t x = 0; x < res; ++x) {
      int hits = 0;
      for (int sy = 0; sy < kSubgrid; ++sy) {
        for (int sx = 0; sx < kSubgrid; ++sx) {
          const double px = static_cast<double>(x) +
                            (static_cast<double>(sx) + 0.5) / kSubgrid;
          const double py = static_cast<double>(y) +
                            (static_cast<double>(sy) + 0.5) / kSubgrid;
          const double u = (px - cx) / half;
          const double v = (py - cy) / half;
          if (std::abs(u) <= 1.0 && std::abs(v) <= 1.0 && shape_inside(shape, u, v)) {
            ++hits;
          }
        }
      }
      const double coverage = static_cast<double>(hits) / (kSubgrid * kSubgrid);
      double value = kBackground + coverage * (kForeground - kBackground);
      if (noise_sigma > 0.0) value += noise_sigma * rng.normal();
      const uint8_t q =
          static_cast<uint8_t>(std::clamp<long>(std::lround(value), 0, 255));
      for (int64_t c = 0; c < channels; ++c) {
        out[(y * res + x) * channels + c] = q;
      }
    }
  }
}

void write_u32(std::ofstream& os, uint32_t v) {
  unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff),
                        static_cast<unsigned char>((v >> 16) & 0xff),
                        static_cast<unsigned char>((v >> 24) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 4);
}

void write_u16(std::ofstream& os, uint16_t v) {
  unsigned char b[2] = {static_cast<unsigned char>(v & 0xff),
                        static_cast<unsigned char>((v >> 8) & 0xff)};
  os.write(reinterpret_cast<const char*>(b), 2);
}

uint32_t read_u32(std::ifstream& is, const char* field) {
  unsigned char b[4];
  if (!is.read(reinterpret_cast<char*>(b), 4)) {
    throw IoError(std::string("dataset read: truncated while reading ") + field);
  }
  return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
         (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

uint16_t read_u16(std::ifstream& is, const char* field) {
  unsigned char b[2];
  if (!is.read(reinterpret_cast<char*>(b), 2)) {
    throw IoError(std::string("dataset read: truncated while reading ") + field);
  }
  return static_cast<uint16_t>(static_cast<uint16_t>(b[0]) |
                               (static_cast<uint16_t>(b[1]) << 8));
}

}  // namespace

void DatasetSpec::validate() const {
  if (num_classes < 2) {
    throw ConfigError("dataset: num_classes must be >= 2, got " +
                      std::to_string(num_classes));
  }
  if (num_classes > max_shape_classes()) {
    throw ConfigError("dataset: num_classes " + std::to_string(num_classes) +
                      " exceeds the " + std::to_string(max_shape_classes()) +
                      " available shape generators");
  }
  if (samples_per_class < 1) {
    throw ConfigError("dataset: samples_per_class must be positive");
  }
  if (base_resolution < 8) {
    throw ConfigError(
        "dataset: base_resolution must be >= 8 (and at least the largest crop "
        "you intend to take)");
  }
  if (!(object_scale_lo > 0.0 && object_scale_lo <= object_scale_hi &&
        object_scale_hi <= 1.0)) {
    throw ConfigError("dataset: object scale range must satisfy 0 < lo <= hi <= 1");
  }
  if (noise_level < 0.0 || noise_level > 1.0) {
    throw ConfigError("dataset: noise_level outside [0,1]");
  }
}

Image LabeledDataset::image(int64_t index) const {
  if (index < 0 || index >= size()) {
    throw ShapeError("dataset: sample index " + std::to_string(index) +
                     " outside [0," + std::to_string(size()) + ")");
  }
  Image img(height, width, channels);
  const uint8_t* src = pixels.data() + index * sample_stride();
  std::copy(src, src + sample_stride(), img.pixels.data());
  return img;
}

int64_t max_shape_classes() { return 10; }

LabeledDataset synth_dataset(const DatasetSpec& spec) {
  spec.validate();
  const int64_t count = spec.num_classes * spec.samples_per_class;
  const int64_t res = spec.base_resolution;
  LabeledDataset ds;
  ds.height = res;
  ds.width = res;
  ds.channels = 3;
  ds.num_classes = spec.num_classes;
  ds.labels.resize(static_cast<size_t>(count));
  ds.pixels.resize(static_cast<size_t>(count * ds.sample_stride()));

  const double sigma = spec.noise_level * 128.0;
  for (int64_t i = 0; i < count; ++i) {
    const int64_t label = i % spec.num_classes;
    ds.labels[i] = static_cast<uint16_t>(label);
    Rng rng(derive_stream(spec.seed, static_cast<uint64_t>(i)));
    const double scale = rng.uniform(spec.object_scale_lo, spec.object_scale_hi);
    const double half = scale * static_cast<double>(res) * 0.5;
    const double cx = rng.uniform(half, static_cast<double>(res) - half);
    const double cy = rng.uniform(half, static_cast<double>(res) - half);
    render_sample(label, res, scale, cx, cy, sigma, rng,
                  ds.pixels.data() + i * ds.sample_stride(), ds.channels);
  }
  return ds;
}

void write_dataset(const LabeledDataset& dataset, const std::string& path) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("dataset write: cannot open " + path);
  os.write("FXDS", 4);
  write_u32(os, 1);
  write_u32(os, static_cast<uint32_t>(dataset.size()));
  write_u32(os, static_cast<uint32_t>(dataset.height));
  write_u32(os, static_cast<uint32_t>(dataset.width));
  write_u32(os, static_cast<uint32_t>(dataset.channels));
  write_u32(os, static_cast<uint32_t>(dataset.num_classes));
  for (int64_t i = 0; i < dataset.size(); ++i) {
    write_u16(os, dataset.labels[i]);
    os.write(reinterpret_cast<const char*>(dataset.pixels.data() +
                                           i * dataset.sample_stride()),
             dataset.sample_stride());
  }
  if (!os) throw IoError("dataset write: failed writing " + path);
}

LabeledDataset read_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("dataset read: cannot open " + path);
  char magic[4];
  if (!is.read(magic, 4)) throw IoError("dataset read: truncated magic in " + path);
  if (std::memcmp(magic, "FXDS", 4) != 0) {
    throw IoError("dataset read: bad magic in " + path + " (expected FXDS)");
  }
  const uint32_t version = read_u32(is, "version");
  if (version != 1) {
    throw IoError("dataset read: unsupported version " + std::to_string(version));
  }
  const uint32_t count = read_u32(is, "count");
  const uint32_t height = read_u32(is, "height");
  const uint32_t width = read_u32(is, "width");
  const uint32_t channels = read_u32(is, "channels");
  const uint32_t num_classes = read_u32(is, "num_classes");
  constexpr uint32_t kMaxDim = 1u << 20;
  if (height == 0 || width == 0 || height > kMaxDim || width > kMaxDim ||
      (channels != 1 && channels != 3) || num_classes < 1 ||
      num_classes > std::numeric_limits<uint16_t>::max()) {
    throw IoError("dataset read: dimension overflow or invalid header in " + path);
  }
  const uint64_t stride =
      static_cast<uint64_t>(height) * width * channels;
  if (stride > (1ull << 32) || static_cast<uint64_t>(count) * stride > (1ull << 36)) {
    throw IoError("dataset read: dimension overflow, refusing " +
                  std::to_string(count) + " samples of " + std::to_string(stride) +
                  " bytes");
  }

  LabeledDataset ds;
  ds.height = height;
  ds.width = width;
  ds.channels = channels;
  ds.num_classes = num_classes;
  ds.labels.resize(count);
  ds.pixels.resize(static_cast<size_t>(count) * stride);
  for (uint32_t i = 0; i < count; ++i) {
    ds.labels[i] = read_u16(is, "label");
    if (ds.labels[i] >= num_classes) {
      throw IoError("dataset read: label " + std::to_string(ds.labels[i]) +
                    " outside [0," + std::to_string(num_classes) + ")");
    }
    if (!is.read(reinterpret_cast<char*>(ds.pixels.data() + i * stride),
                 static_cast<std::streamsize>(stride))) {
      const auto got = is.gcount();
      throw IoError("dataset read: truncated pixels at sample " + std::to_string(i) +
                    ", expected " + std::to_string(stride) + " bytes, got " +
                    std::to_string(got));
    }
  }
  return ds;
}

}  // namespace fixres
