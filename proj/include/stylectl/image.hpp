/* Copyright 2026 The stylectl Authors. All Rights Reserved.

Licensed under the Apache License, Version 2.0 (the "License");
you may not use this file except in compliance with the License.
You may obtain a copy of the License at

    http://www.apache.org/licenses/LICENSE-2.0

Unless required by applicable law or agreed to in writing, software
distributed under the License is distributed on an "AS IS" BASIS,
WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
See the License for the specific language governing permissions and
limitations under the License.
==============================================================================*/

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>

#include "stylectl/tensor.hpp"

namespace stylectl {

// Planar image with samples in [0, 1]. One channel for grayscale, three for
// RGB.
struct Image {
  Tensor planes;

  Image() = default;
  Image(int width, int height, int channels, double fill = 0.0)
      : planes(channels, height, width, fill) {}
  explicit Image(Tensor t) : planes(std::move(t)) {}

  int width() const noexcept { return planes.width; }
  int height() const noexcept { return planes.height; }
  int channels() const noexcept { return planes.channels; }
  bool empty() const noexcept { return planes.data.empty(); }

  double& at(int c, int y, int x) { return planes.at(c, y, x); }
  double at(int c, int y, int x) const { return planes.at(c, y, x); }

  friend bool operator==(const Image&, const Image&) = default;
};

inline std::uint8_t to_byte(double v) {
  return static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

// Round-trips through 8 bits so in-memory results match what a PNG holds.
inline Image quantize8(const Image& img) {
  Image out = img;
  for (double& v : out.planes.data) v = to_byte(v) / 255.0;
  return out;
}

inline Image to_gray(const Image& img) {
  if (img.channels() == 1) return img;
  Image out(img.width(), img.height(), 1);
  for (int y = 0; y < img.height(); ++y)
    for (int x = 0; x < img.width(); ++x) {
      if (img.channels() >= 3) {
        out.at(0, y, x) = 0.299 * img.at(0, y, x) + 0.587 * img.at(1, y, x) +
                          0.114 * img.at(2, y, x);
      } else {
        out.at(0, y, x) = img.at(0, y, x);
      }
    }
  return out;
}

inline Image to_rgb(const Image& img) {
  if (img.channels() == 3) return img;
  Image out(img.width(), img.height(), 3);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < img.height(); ++y)
      for (int x = 0; x < img.width(); ++x)
        out.at(c, y, x) = img.at(std::min(c, img.channels() - 1), y, x);
  return out;
}

inline Image resize_bilinear(const Image& img, int width, int height) {
  if (width < 1 || height < 1) throw ArgumentError("resize to empty extent");
  if (width == img.width() && height == img.height()) return img;
  Image out(width, height, img.channels());
  const double sx = static_cast<double>(img.width()) / width;
  const double sy = static_cast<double>(img.height()) / height;
  for (int y = 0; y < height; ++y) {
    const double fy = std::clamp((y + 0.5) * sy - 0.5, 0.0, img.height() - 1.0);
    const int y0 = static_cast<int>(fy);
    const int y1 = std::min(y0 + 1, img.height() - 1);
    const double wy = fy - y0;
    for (int x = 0; x < width; ++x) {
      const double fx =
          std::clamp((x + 0.5) * sx - 0.5, 0.0, img.width() - 1.0);
      const int x0 = static_cast<int>(fx);
      const int x1 = std::min(x0 + 1, img.width() - 1);
      const double wx = fx - x0;
      for (int c = 0; c < img.channels(); ++c) {
        const double top = img.at(c, y0, x0) * (1 - wx) + img.at(c, y0, x1) * wx;
        const double bot = img.at(c, y1, x0) * (1 - wx) + img.at(c, y1, x1) * wx;
        out.at(c, y, x) = top * (1 - wy) + bot * wy;
      }
    }
  }
  return out;
}

// Largest centered crop with the target aspect ratio, then bilinear resize.
inline Image center_crop_resize(const Image& img, int width, int height) {
  if (img.width() == width && img.height() == height) return img;
  const double target = static_cast<double>(width) / height;
  const double aspect = static_cast<double>(img.width()) / img.height();
  int cw = img.width();
  int ch = img.height();
  if (aspect > target) {
    cw = std::max(1, static_cast<int>(std::lround(img.height() * target)));
  } else if (aspect < target) {
    ch = std::max(1, static_cast<int>(std::lround(img.width() / target)));
  }
  const int ox = (img.width() - cw) / 2;
  const int oy = (img.height() - ch) / 2;
  Image crop(cw, ch, img.channels());
  for (int c = 0; c < img.channels(); ++c)
    for (int y = 0; y < ch; ++y)
      for (int x = 0; x < cw; ++x) crop.at(c, y, x) = img.at(c, y + oy, x + ox);
  return resize_bilinear(crop, width, height);
}

inline double mse(const Image& a, const Image& b) {
  require_same_shape(a.planes, b.planes, "mse");
  double acc = 0.0;
  for (std::size_t i = 0; i < a.planes.size(); ++i) {
    const double d = a.planes.data[i] - b.planes.data[i];
    acc += d * d;
  }
  return acc / static_cast<double>(a.planes.size());
}

// Peak signal-to-noise ratio in dB for unit-range images.
inline double psnr(const Image& a, const Image& b) {
  const double m = mse(a, b);
  if (m <= 0.0) return std::numeric_limits<double>::infinity();
  return 10.0 * std::log10(1.0 / m);
}

}  // namespace stylectl
