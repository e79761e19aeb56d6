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

#ifndef FIXRES_DATASET_HPP_
#define FIXRES_DATASET_HPP_

#include <cstdint>
#include <string>
#include <vector>

#include "fixres/image.hpp"
#include "fixres/tensor.hpp"

namespace fixres {

/** Recipe for the procedural shapes dataset. */
struct DatasetSpec {
  int64_t num_classes = 8;
  int64_t samples_per_class = 100;
  int64_t base_resolution = 64;
  double object_scale_lo = 0.3;
  double object_scale_hi = 0.8;
  double noise_level = 0.1;  // gaussian sigma = noise_level * 128 gray levels
  uint64_t seed = 0;

  void validate() const;
};

/** Fixed-geometry labeled image set; samples stored contiguously. */
struct LabeledDataset {
  int64_t height = 0;
  int64_t width = 0;
  int64_t channels = 0;
  int64_t num_classes = 0;
  std::vector<uint16_t> labels;
  std::vector<uint8_t> pixels;  // size() * height * width * channels

  int64_t size() const { return static_cast<int64_t>(labels.size()); }
  int64_t sample_stride() const { return height * width * channels; }
  Image image(int64_t index) const;
};

/** Number of distinct procedural shape classes available. */
int64_t max_shape_classes();

/**
 * Deterministic procedural dataset: class i%num_classes renders shape i at a
 * random scale/position with additive gaussian pixel noise. Each sample draws
 * from its own derived RNG stream, so generation order never affects content.
 */
LabeledDataset synth_dataset(const DatasetSpec& spec);

/** Serialize to the FXDS container. */
void write_dataset(const LabeledDataset& dataset, const std::string& path);

/** Parse an FXDS file; bad magic, truncation, and oversized dims are distinct errors. */
LabeledDataset read_dataset(const std::string& path);

/**
 * Pack images (all sharing one geometry) into an NCHW tensor normalized as
 * (p/255 - 0.5) / 0.25, the fixed input scaling of the models here.
 */
template <typename T>
Tensor<T> images_to_tensor(const std::vector<Image>& images) {
  if (images.empty()) throw ShapeError("images_to_tensor: empty batch");
  const int64_t n = static_cast<int64_t>(images.size());
  const int64_t c = images[0].channels, h = images[0].height, w = images[0].width;
  std::vector<T> data(static_cast<size_t>(n * c * h * w));
  for (int64_t i = 0; i < n; ++i) {
    const Image& img = images[i];
    if (img.channels != c || img.height != h || img.width != w) {
      throw ShapeError("images_to_tensor: mixed image geometries in one batch");
    }
    for (int64_t ch = 0; ch < c; ++ch) {
      T* dst = data.data() + ((i * c + ch) * h * w);
      for (int64_t y = 0; y < h; ++y) {
        for (int64_t x = 0; x < w; ++x) {
          const double p = static_cast<double>(img.at(y, x, ch));
          dst[y * w + x] = static_cast<T>((p / 255.0 - 0.5) / 0.25);
        }
      }
    }
  }
  return Tensor<T>::from_data({n, c, h, w}, std::move(data));
}

}  // namespace fixres

#endif  // FIXRES_DATASET_HPP_
