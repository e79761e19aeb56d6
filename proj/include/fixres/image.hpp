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

#ifndef FIXRES_IMAGE_HPP_
#define FIXRES_IMAGE_HPP_

#include <cstdint>
#include <vector>

#include "fixres/error.hpp"
#include "fixres/rng.hpp"

namespace fixres {

/** Interleaved row-major u8 image, 1 or 3 channels. */
struct Image {
  int64_t height = 0;
  int64_t width = 0;
  int64_t channels = 0;
  std::vector<uint8_t> pixels;  // height * width * channels

  Image() = default;
  Image(int64_t h, int64_t w, int64_t c);

  uint8_t at(int64_t y, int64_t x, int64_t c) const {
    return pixels[(y * width + x) * channels + c];
  }
  uint8_t& at(int64_t y, int64_t x, int64_t c) {
    return pixels[(y * width + x) * channels + c];
  }
};

/**
 * Region of classification: the axis-aligned source rectangle that gets
 * resized into the fixed-size network input. Train and test pipelines differ
 * exactly in how they pick this rectangle.
 */
struct RoC {
  int64_t x = 0;
  int64_t y = 0;
  int64_t w = 0;
  int64_t h = 0;
};

/** Train-time crop sampling parameters (area and aspect of the RoC). */
struct AugmentConfig {
  double area_lo = 0.08;
  double area_hi = 1.0;
  double aspect_lo = 3.0 / 4.0;
  double aspect_hi = 4.0 / 3.0;
  double flip_probability = 0.5;
  int64_t out_size = 0;

  void validate() const;
};

/** Test-time pipeline: resize so the crop covers crop_ratio of the short side. */
struct TestPreproc {
  double crop_ratio = 0.875;
  int64_t out_size = 0;

  void validate() const;
};

/**
 * Sample a train-time RoC: one area fraction drawn uniform in
 * [area_lo, area_hi], then up to 10 aspect draws (log-uniform in
 * [aspect_lo, aspect_hi]) looking for a rectangle that fits the image; if
 * none fits, fall back to the maximal centered square.
 */
RoC sample_roc(int64_t img_h, int64_t img_w, Rng& rng, const AugmentConfig& config);

/** Copy the RoC out of the image. */
Image crop(const Image& image, const RoC& roc);

/** Mirror left-right. */
Image flip_horizontal(const Image& image);

/**
 * Bilinear resample with half-pixel centers: src = (dst + 0.5) * scale - 0.5,
 * clamped to borders; channels independent; rounds half away from zero.
 * Bitwise identity when sizes already match.
 */
Image resize_bilinear(const Image& image, int64_t out_h, int64_t out_w);

/** Train-time pipeline: sample_roc, crop, resize to out_size, random flip. */
Image random_resized_crop(const Image& image, Rng& rng, const AugmentConfig& config);

/**
 * Test-time pipeline: resize the shorter side to round(out_size / crop_ratio)
 * keeping aspect, then take the centered out_size square. Odd leftover gives
 * the extra pixel to the right/bottom.
 */
Image center_crop_preproc(const Image& image, const TestPreproc& preproc);

}  // namespace fixres

#endif  // FIXRES_IMAGE_HPP_
