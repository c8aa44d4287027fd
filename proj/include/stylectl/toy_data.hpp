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

// Procedural "face-like" images for the toy backend: an elliptical face,
// two eyes and a mouth bar over a background, colored by a style family.

#include <array>
#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "stylectl/errors.hpp"
#include "stylectl/image.hpp"

namespace stylectl {

enum class StyleFamily { Photo, Comic, Ink, Pastel };

inline constexpr std::array<StyleFamily, 4> kStyleFamilies = {
    StyleFamily::Photo, StyleFamily::Comic, StyleFamily::Ink, StyleFamily::Pastel};

inline std::string_view family_name(StyleFamily f) {
  switch (f) {
    case StyleFamily::Photo:
      return "photo";
    case StyleFamily::Comic:
      return "comic";
    case StyleFamily::Ink:
      return "ink";
    case StyleFamily::Pastel:
      return "pastel";
  }
  return "photo";
}

inline StyleFamily parse_family(std::string_view name) {
  for (auto f : kStyleFamilies)
    if (family_name(f) == name) return f;
  throw ArgumentError("unknown style family '" + std::string(name) + "'");
}

using Rgb = std::array<double, 3>;

// Geometry and palette of one face, all lengths relative to image size.
struct FaceParams {
  StyleFamily family = StyleFamily::Photo;
  double cx = 0.5, cy = 0.52;  // face center
  double rx = 0.3, ry = 0.38;  // face radii
  double eye_dx = 0.11, eye_y = 0.44, eye_r = 0.05;
  double mouth_y = 0.66, mouth_w = 0.16, mouth_h = 0.035;
  Rgb background{}, skin{}, eyes{}, mouth{};
  bool stripes = false;  // diagonal background texture
  double stripe_period = 0.125;
};

namespace detail {

inline Rgb jitter(const Rgb& base, double amount, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(-amount, amount);
  Rgb out;
  for (int i = 0; i < 3; ++i) out[static_cast<std::size_t>(i)] =
      std::clamp(base[static_cast<std::size_t>(i)] + u(rng), 0.0, 1.0);
  return out;
}

}  // namespace detail

inline FaceParams random_face(StyleFamily family, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto range = [&](double lo, double hi) { return lo + (hi - lo) * u(rng); };
  FaceParams p;
  p.family = family;
  p.cx = range(0.44, 0.56);
  p.cy = range(0.47, 0.55);
  p.rx = range(0.25, 0.33);
  p.ry = range(0.32, 0.40);
  p.eye_dx = range(0.09, 0.13);
  p.eye_y = p.cy - range(0.06, 0.11);
  p.eye_r = range(0.04, 0.06);
  p.mouth_y = p.cy + range(0.12, 0.18);
  p.mouth_w = range(0.12, 0.2);
  p.mouth_h = range(0.025, 0.045);
  switch (family) {
    case StyleFamily::Photo:
      p.background = detail::jitter({0.55, 0.6, 0.65}, 0.08, rng);
      p.skin = detail::jitter({0.87, 0.68, 0.55}, 0.06, rng);
      p.eyes = detail::jitter({0.3, 0.2, 0.12}, 0.05, rng);
      p.mouth = detail::jitter({0.72, 0.35, 0.35}, 0.05, rng);
      break;
    case StyleFamily::Comic:
      p.background = detail::jitter({0.98, 0.85, 0.15}, 0.05, rng);
      p.skin = detail::jitter({1.0, 0.55, 0.6}, 0.05, rng);
      p.eyes = detail::jitter({0.05, 0.05, 0.1}, 0.04, rng);
      p.mouth = detail::jitter({0.9, 0.1, 0.15}, 0.05, rng);
      p.stripes = true;
      p.stripe_period = range(0.1, 0.16);
      break;
    case StyleFamily::Ink:
      p.background = detail::jitter({0.95, 0.94, 0.9}, 0.03, rng);
      p.skin = detail::jitter({0.78, 0.78, 0.78}, 0.05, rng);
      p.eyes = detail::jitter({0.05, 0.05, 0.05}, 0.03, rng);
      p.mouth = detail::jitter({0.15, 0.15, 0.15}, 0.04, rng);
      break;
    case StyleFamily::Pastel:
      p.background = detail::jitter({0.62, 0.88, 0.78}, 0.06, rng);
      p.skin = detail::jitter({0.85, 0.72, 0.92}, 0.05, rng);
      p.eyes = detail::jitter({0.25, 0.35, 0.8}, 0.05, rng);
      p.mouth = detail::jitter({0.95, 0.5, 0.7}, 0.05, rng);
      break;
  }
  return p;
}

// Region label of a pixel center: 0 background, 1 skin, 2 eye, 3 mouth.
inline int face_region(const FaceParams& p, double x, double y) {
  const double fx = (x - p.cx) / p.rx, fy = (y - p.cy) / p.ry;
  if (fx * fx + fy * fy > 1.0) return 0;
  for (double side : {-1.0, 1.0}) {
    const double ex = x - (p.cx + side * p.eye_dx), ey = y - p.eye_y;
    if (ex * ex + ey * ey <= p.eye_r * p.eye_r) return 2;
  }
  if (std::abs(x - p.cx) <= p.mouth_w / 2 && std::abs(y - p.mouth_y) <= p.mouth_h / 2) return 3;
  return 1;
}

inline Image render_face(const FaceParams& p, int size) {
  Image img(size, size, 3);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const double u = (x + 0.5) / size, v = (y + 0.5) / size;
      Rgb c{};
      switch (face_region(p, u, v)) {
        case 0: {
          c = p.background;
          if (p.stripes && std::fmod(u + v, p.stripe_period) < p.stripe_period / 2)
            for (double& ch : c) ch *= 0.8;
          break;
        }
        case 1:
          c = p.skin;
          break;
        case 2:
          c = p.eyes;
          break;
        default:
          c = p.mouth;
          break;
      }
      for (int ch = 0; ch < 3; ++ch) img.at(ch, y, x) = c[static_cast<std::size_t>(ch)];
    }
  return quantize8(img);
}

// Binary single-channel raster of one attribute: "face" (skin, eyes and
// mouth), "skin", "eyes", "mouth" or "background".
inline Image render_attribute_mask(const FaceParams& p, std::string_view attribute, int size) {
  Image m(size, size, 1);
  for (int y = 0; y < size; ++y)
    for (int x = 0; x < size; ++x) {
      const int r = face_region(p, (x + 0.5) / size, (y + 0.5) / size);
      bool on = false;
      if (attribute == "face") on = r != 0;
      else if (attribute == "skin") on = r == 1;
      else if (attribute == "eyes") on = r == 2;
      else if (attribute == "mouth") on = r == 3;
      else if (attribute == "background") on = r == 0;
      else throw ArgumentError("unknown face attribute '" + std::string(attribute) + "'");
      m.at(0, y, x) = on ? 1.0 : 0.0;
    }
  return m;
}

// `count` faces cycling through every style family.
inline std::vector<Image> make_face_dataset(int count, int size, std::uint64_t seed) {
  if (count < 0) throw ArgumentError("dataset size must be >= 0");
  std::mt19937_64 rng(seed);
  std::vector<Image> out;
  out.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i)
    out.push_back(render_face(random_face(kStyleFamilies[static_cast<std::size_t>(i) % 4], rng), size));
  return out;
}

}  // namespace stylectl
