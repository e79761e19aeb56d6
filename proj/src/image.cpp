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

#include "fixres/image.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace fixres {

Image::Image(int64_t h, int64_t w, int64_t c) : height(h), width(w), channels(c) {
  if (h < 1 || w < 1) {
    throw ShapeError("image dims must be positive, got " + std::to_string(h) + "x" +
                     std::to_string(w));
  }
  if (c != 1 && c != 3) {
    throw ShapeError("image channels must be 1 or 3, got " + std::to_string(c));
  }
  pixels.assign(static_cast<size_t>(h * w * c), 0);
}

void AugmentConfig::validate() const {
  if (!(area_lo > 0.0 && area_lo <= area_hi && area_hi <= 1.0)) {
    throw ConfigError("augment: area fraction range must satisfy 0 < lo <= hi <= 1");
  }
  if (!(aspect_lo <= 1.0 && 1.0 <= aspect_hi) || aspect_lo <= 0.0) {
    throw ConfigError("augment: aspect ratio range must straddle 1 with lo > 0");
  }
  if (flip_probability < 0.0 || flip_probability > 1.0) {
    throw ConfigError("augment: flip probability outside [0,1]");
  }
  if (out_size < 8) {
    throw ConfigError("augment: out_size must be >= 8, got " + std::to_string(out_size));
  }
}

void TestPreproc::validate() const {
  if (!(crop_ratio > 0.0 && crop_ratio <= 1.0)) {
    throw ConfigError("test preproc: crop_ratio must be in (0,1]");
  }
  if (out_size < 1) {
    throw ConfigError("test preproc: out_size must be positive");
  }
}

RoC sample_roc(int64_t img_h, int64_t img_w, Rng& rng, const AugmentConfig& config) {
  config.validate();
  if (img_h < 8 || img_w < 8) {
    throw ShapeError("sample_roc: image must be at least 8x8, got " +
                     std::to_string(img_h) + "x" + std::to_string(img_w));
  }
  const double image_area = static_cast<double>(img_h) * static_cast<double>(img_w);
  // One area draw per call; only the aspect is retried. Re-drawing the area on
  // every attempt would skew the accepted area distribution low (large
  // fractions fail more often), and the area fraction is the statistic the
  // whole train/test size mismatch rests on.
  const double frac = rng.uniform(config.area_lo, config.area_hi);
  const double target = frac * image_area;
  for (int attempt = 0; attempt < 10; ++attempt) {
    const double aspect =
        std::exp(rng.uniform(std::log(config.aspect_lo), std::log(config.aspect_hi)));
    const int64_t w = std::llround(std::sqrt(target * aspect));
    const int64_t h = std::llround(std::sqrt(target / aspect));
    if (w >= 1 && h >= 1 && w <= img_w && h <= img_h) {
      RoC roc;
      roc.w = w;
      roc.h = h;
      roc.x = rng.uniform_int(0, img_w - w);
      roc.y = rng.uniform_int(0, img_h - h);
      return roc;
    }
  }
  const int64_t side = std::min(img_h, img_w);
  RoC roc;
  roc.w = side;
  roc.h = side;
  roc.x = (img_w - side) / 2;
  roc.y = (img_h - side) / 2;
  return roc;
}

Image crop(const Image& image, const RoC& roc) {
  if (roc.w < 1 || roc.h < 1 || roc.x < 0 || roc.y < 0 ||
      roc.x + roc.w > image.width || roc.y + roc.h > image.height) {
    throw ShapeError("crop: region " + std::to_string(roc.w) + "x" + std::to_string(roc.h) +
                     "+" + std::to_string(roc.x) + "+" + std::to_string(roc.y) +
                     " outside " + std::to_string(image.height) + "x" +
                     std::to_string(image.width) + " image");
  }
  Image out(roc.h, roc.w, image.channels);
  const int64_t row_bytes = roc.w * image.channels;
  for (int64_t y = 0; y < roc.h; ++y) {
    const uint8_t* src =
        image.pixels.data() + ((roc.y + y) * image.width + roc.x) * image.channels;
    std::copy(src, src + row_bytes, out.pixels.data() + y * row_bytes);
  }
  return out;
}

Image flip_horizontal(const Image& image) {
  Image out(image.height, image.width, image.channels);
  for (int64_t y = 0; y < image.height; ++y) {
    for (int64_t x = 0; x < image.width; ++x) {
      for (int64_t c = 0; c < image.channels; ++c) {
        out.at(y, x, c) = image.at(y, image.width - 1 - x, c);
      }
    }
  }
  return out;
}

Image resize_bilinear(const Image& image, int64_t out_h, int64_t out_w) {
  if (out_h < 1 || out_w < 1) {
    throw ShapeError("resize_bilinear: output dims must be positive");
  }
  if (out_h == image.height && out_w == image.width) return image;

  Image out(out_h, out_w, image.channels);
  const double scale_y = static_cast<double>(image.height) / static_cast<double>(out_h);
  const double scale_x = static_cast<double>(image.width) / static_cast<double>(out_w);
  for (int64_t y = 0; y < out_h; ++y) {
    double sy = (static_cast<double>(y) + 0.5) * scale_y - 0.5;
    sy = std::clamp(sy, 0.0, static_cast<double>(image.height - 1));
    const int64_t y0 = static_cast<int64_t>(sy);
    const int64_t y1 = std::min(y0 + 1, image.height - 1);
    const double fy = sy - static_cast<double>(y0);
    for (int64_t x = 0; x < out_w; ++x) {
      double sx = (static_cast<double>(x) + 0.5) * scale_x - 0.5;
      sx = std::clamp(sx, 0.0, static_cast<double>(image.width - 1));
      const int64_t x0 = static_cast<int64_t>(sx);
      const int64_t x1 = std::min(x0 + 1, image.width - 1);
      const double fx = sx - static_cast<double>(x0);
      for (int64_t c = 0; c < image.channels; ++c) {
        // Expanded four-weight form, not lerp-of-lerps: the rounding of exact
        // halves must be reproducible from the per-pixel definition alone.
        const double p00 = image.at(y0, x0, c);
        const double p01 = image.at(y0, x1, c);
        const double p10 = image.at(y1, x0, c);
        const double p11 = image.at(y1, x1, c);
        const double v = (1.0 - fy) * (1.0 - fx) * p00 + (1.0 - fy) * fx * p01 +
                         fy * (1.0 - fx) * p10 + fy * fx * p11;
        out.at(y, x, c) = static_cast<uint8_t>(std::clamp<long>(std::lround(v), 0, 255));
      }
    }
  }
  return out;
}

Image random_resized_crop(const Image& image, Rng& rng, const AugmentConfig& config) {
  const RoC roc = sample_roc(image.height, image.width, rng, config);
  Image out = resize_bilinear(crop(image, roc), config.out_size, config.out_size);
  if (rng.bernoulli(config.flip_probability)) out = flip_horizontal(out);
  return out;
}

Image center_crop_preproc(const Image& image, const TestPreproc& preproc) {
  preproc.validate();
  if (image.height < 2 || image.width < 2) {
    throw ShapeError("center_crop_preproc: image must be at least 2x2");
  }
  const int64_t target_short =
      std::llround(static_cast<double>(preproc.out_size) / preproc.crop_ratio);
  int64_t new_h, new_w;
  if (image.height <= image.width) {
    new_h = target_short;
    new_w = std::llround(static_cast<double>(image.width) *
                         static_cast<double>(target_short) /
                         static_cast<double>(image.height));
  } else {
    new_w = target_short;
    new_h = std::llround(static_cast<double>(image.height) *
                         static_cast<double>(target_short) /
                         static_cast<double>(image.width));
  }
  const Image resized = resize_bilinear(image, new_h, new_w);
  RoC window;
  window.w = preproc.out_size;
  window.h = preproc.out_size;
  window.x = (resized.width - preproc.out_size) / 2;   // extra pixel stays right
  window.y = (resized.height - preproc.out_size) / 2;  // extra pixel stays bottom
  return crop(resized, window);
}

}  // namespace fixres
