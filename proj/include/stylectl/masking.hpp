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

// Region masks: loading, face-parser adapters, and resampling to every
// attention site's grid.

#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <vector>

#include "stylectl/attention_control.hpp"
#include "stylectl/errors.hpp"
#include "stylectl/image.hpp"
#include "stylectl/image_io.hpp"
#include "stylectl/sites.hpp"

namespace stylectl {

// Binary mask at image resolution, row-major, 1 = region of interest.
struct Mask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> bits;

  Mask() = default;
  Mask(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), bits(static_cast<std::size_t>(w) * h, fill) {}

  std::uint8_t at(int y, int x) const {
    return bits[static_cast<std::size_t>(y) * width + x];
  }
  std::uint8_t& at(int y, int x) { return bits[static_cast<std::size_t>(y) * width + x]; }

  std::size_t count() const noexcept {
    std::size_t n = 0;
    for (auto b : bits) n += b;
    return n;
  }
  bool empty_region() const noexcept { return count() == 0; }

  friend bool operator==(const Mask&, const Mask&) = default;
};

inline Mask invert(const Mask& m) {
  Mask out = m;
  for (auto& b : out.bits) b = static_cast<std::uint8_t>(1 - b);
  return out;
}

// Pixels >= threshold * full scale become 1. Color rasters are reduced to
// luma first.
inline Mask mask_from_image(const Image& img, double threshold = 0.5) {
  const Image gray = to_gray(img);
  Mask m(gray.width(), gray.height());
  for (int y = 0; y < gray.height(); ++y)
    for (int x = 0; x < gray.width(); ++x)
      m.at(y, x) = gray.at(0, y, x) >= threshold ? 1 : 0;
  return m;
}

// Single-channel 8-bit raster, 255 = region.
inline Image mask_to_image(const Mask& m) {
  Image img(m.width, m.height, 1);
  for (int y = 0; y < m.height; ++y)
    for (int x = 0; x < m.width; ++x) img.at(0, y, x) = m.at(y, x) ? 1.0 : 0.0;
  return img;
}

inline Mask decode_mask(std::span<const std::uint8_t> bytes, double threshold = 0.5) {
  return mask_from_image(decode_image(bytes), threshold);
}

inline Mask load_mask(const std::filesystem::path& path, double threshold = 0.5) {
  return mask_from_image(read_image(path), threshold);
}

inline void save_mask(const std::filesystem::path& path, const Mask& m) {
  write_png(path, mask_to_image(m));
}

// Per-site flattened masks, keyed by site index.
struct MaskPyramid {
  std::map<int, MaskVector> levels;

  const MaskVector& at(int site) const {
    auto it = levels.find(site);
    if (it == levels.end())
      throw ArgumentError("mask pyramid has no level for site " + std::to_string(site));
    return it->second;
  }
  friend bool operator==(const MaskPyramid&, const MaskPyramid&) = default;
};

// Nearest-neighbour resample of `mask` onto an h x w grid (cell centers),
// flattened row-major to match attention position order.
inline MaskVector resample_mask(const Mask& mask, int height, int width) {
  if (height > mask.height || width > mask.width)
    throw ArgumentError("attention grid " + std::to_string(height) + "x" +
                        std::to_string(width) + " is larger than the mask " +
                        std::to_string(mask.height) + "x" + std::to_string(mask.width));
  if (height < 1 || width < 1) throw ArgumentError("empty attention grid");
  MaskVector out(static_cast<std::size_t>(height) * width);
  for (int y = 0; y < height; ++y) {
    const int sy = static_cast<int>((2LL * y + 1) * mask.height / (2LL * height));
    for (int x = 0; x < width; ++x) {
      const int sx = static_cast<int>((2LL * x + 1) * mask.width / (2LL * width));
      // Nearest-neighbour samples are already 0/1; re-binarizing at 0.5 is
      // the identity here.
      out[static_cast<std::size_t>(y) * width + x] = mask.at(sy, sx) >= 1 ? 1 : 0;
    }
  }
  return out;
}

// Nearest-neighbour resize at any scale.
inline Mask resize_mask_nearest(const Mask& mask, int width, int height) {
  if (width < 1 || height < 1) throw ArgumentError("empty mask size");
  if (mask.width == width && mask.height == height) return mask;
  Mask out(width, height);
  for (int y = 0; y < height; ++y) {
    const int sy = static_cast<int>((2LL * y + 1) * mask.height / (2LL * height));
    for (int x = 0; x < width; ++x)
      out.at(y, x) = mask.at(sy, static_cast<int>((2LL * x + 1) * mask.width / (2LL * width)));
  }
  return out;
}

inline MaskPyramid build_pyramid(const Mask& mask, std::span<const AttentionSite> sites) {
  MaskPyramid p;
  for (const auto& s : sites) p.levels.emplace(s.index, resample_mask(mask, s.height, s.width));
  return p;
}

// ---------------------------------------------------------------------------
// Face parsing adapters

class FaceParserAdapter {
 public:
  virtual ~FaceParserAdapter() = default;
  virtual std::string name() const = 0;
  virtual std::vector<std::string> supported_attributes() const = 0;
  virtual Mask parse(const Image& image, std::string_view attribute) = 0;
};

// Every pixel belongs to every attribute.
class WholeImageParser final : public FaceParserAdapter {
 public:
  std::string name() const override { return "whole-image"; }
  std::vector<std::string> supported_attributes() const override {
    return {"face", "skin", "eyes", "mouth", "hair", "background", "all"};
  }
  Mask parse(const Image& image, std::string_view) override {
    return Mask(image.width(), image.height(), 1);
  }
};

// Serves masks stored as <dir>/<attribute>.png; stands in for an external
// parser that was run ahead of time.
class DirectoryParser final : public FaceParserAdapter {
 public:
  explicit DirectoryParser(std::filesystem::path dir) : dir_(std::move(dir)) {}

  std::string name() const override { return "directory:" + dir_.string(); }
  std::vector<std::string> supported_attributes() const override {
    std::vector<std::string> out;
    if (std::filesystem::is_directory(dir_))
      for (const auto& e : std::filesystem::directory_iterator(dir_))
        if (e.path().extension() == ".png") out.push_back(e.path().stem().string());
    std::sort(out.begin(), out.end());
    return out;
  }
  Mask parse(const Image& image, std::string_view attribute) override {
    Mask m = load_mask(dir_ / (std::string(attribute) + ".png"));
    if (m.width != image.width() || m.height != image.height())
      throw ArgumentError("stored mask for '" + std::string(attribute) +
                          "' does not match the image resolution");
    return m;
  }

 private:
  std::filesystem::path dir_;
};

// Serializes calls into an adapter that is not known to be reentrant.
class SerializedParser final : public FaceParserAdapter {
 public:
  explicit SerializedParser(std::shared_ptr<FaceParserAdapter> inner) : inner_(std::move(inner)) {}
  std::string name() const override { return inner_->name(); }
  std::vector<std::string> supported_attributes() const override {
    std::lock_guard lock(mu_);
    return inner_->supported_attributes();
  }
  Mask parse(const Image& image, std::string_view attribute) override {
    std::lock_guard lock(mu_);
    return inner_->parse(image, attribute);
  }

 private:
  std::shared_ptr<FaceParserAdapter> inner_;
  mutable std::mutex mu_;
};

inline Mask parse_face(const Image& image, FaceParserAdapter* parser, std::string_view attribute) {
  if (parser == nullptr)
    throw CapabilityError("no face parser is registered; supply mask files instead");
  const auto supported = parser->supported_attributes();
  if (std::find(supported.begin(), supported.end(), attribute) == supported.end())
    throw ArgumentError("face parser '" + parser->name() + "' does not support attribute '" +
                        std::string(attribute) + "'");
  try {
    return parser->parse(image, attribute);
  } catch (const Error& e) {
    throw Error("face parser '" + parser->name() + "' failed on '" + std::string(attribute) +
                "': " + e.what());
  } catch (const std::exception& e) {
    throw Error("face parser '" + parser->name() + "' failed on '" + std::string(attribute) +
                "': " + e.what());
  }
}

}  // namespace stylectl
