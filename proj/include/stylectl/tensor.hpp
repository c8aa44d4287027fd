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
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "stylectl/errors.hpp"

namespace stylectl {

// Dense channels x height x width tensor, planar layout, row-major inside a
// plane. Latent codes and noise share this type.
struct Tensor {
  int channels = 0;
  int height = 0;
  int width = 0;
  std::vector<double> data;

  Tensor() = default;
  Tensor(int c, int h, int w, double fill = 0.0)
      : channels(c), height(h), width(w),
        data(static_cast<std::size_t>(c) * h * w, fill) {
    if (c < 0 || h < 0 || w < 0) throw ArgumentError("negative tensor extent");
  }

  std::size_t size() const noexcept { return data.size(); }
  std::size_t plane() const noexcept {
    return static_cast<std::size_t>(height) * width;
  }

  double& at(int c, int y, int x) {
    return data[static_cast<std::size_t>(c) * plane() +
                static_cast<std::size_t>(y) * width + x];
  }
  double at(int c, int y, int x) const {
    return data[static_cast<std::size_t>(c) * plane() +
                static_cast<std::size_t>(y) * width + x];
  }

  bool same_shape(const Tensor& o) const noexcept {
    return channels == o.channels && height == o.height && width == o.width;
  }

  bool all_finite() const noexcept {
    return std::all_of(data.begin(), data.end(),
                       [](double v) { return std::isfinite(v); });
  }

  std::string shape_string() const {
    return std::to_string(channels) + "x" + std::to_string(height) + "x" +
           std::to_string(width);
  }

  friend bool operator==(const Tensor&, const Tensor&) = default;
};

inline void require_same_shape(const Tensor& a, const Tensor& b,
                               const char* what) {
  if (!a.same_shape(b)) {
    throw ArgumentError(std::string(what) + ": shape mismatch " +
                        a.shape_string() + " vs " + b.shape_string());
  }
}

// Max over elements of |a - b| / max(|b|, floor).
inline double max_relative_error(const Tensor& a, const Tensor& b,
                                 double floor = 1e-12) {
  require_same_shape(a, b, "max_relative_error");
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double den = std::max(std::abs(b.data[i]), floor);
    worst = std::max(worst, std::abs(a.data[i] - b.data[i]) / den);
  }
  return worst;
}

}  // namespace stylectl
