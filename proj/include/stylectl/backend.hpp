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

// Pluggable denoiser and latent codec interfaces.

#include <cmath>
#include <random>
#include <string>
#include <string_view>
#include <vector>

#include "stylectl/attention_control.hpp"
#include "stylectl/errors.hpp"
#include "stylectl/hashing.hpp"
#include "stylectl/image.hpp"
#include "stylectl/sites.hpp"
#include "stylectl/tensor.hpp"

namespace stylectl {

struct Conditioning {
  std::string prompt_text;
  std::vector<double> embedding;
  double guidance_scale = 0.0;

  friend bool operator==(const Conditioning&, const Conditioning&) = default;
};

// Query/key/value projections of one head at one site, each L x head_dim.
struct HeadFeatures {
  Matrix q;
  Matrix k;
  Matrix v;
};
using BranchFeatures = std::vector<HeadFeatures>;

// Hook installed into a denoiser forward pass. For every site it intercepts,
// the backend hands over the per-head projections and uses the returned
// per-head outputs (L x head_dim each) in place of plain self-attention.
class AttentionController {
 public:
  virtual ~AttentionController() = default;
  virtual bool intercepts(const AttentionSite& site) const = 0;
  virtual std::vector<Matrix> attend(const AttentionSite& site,
                                     const BranchFeatures& features) = 0;
};

// Plain self-attention per head; the reference behaviour of an uncontrolled
// site.
inline std::vector<Matrix> self_attention(const BranchFeatures& features) {
  std::vector<Matrix> out;
  out.reserve(features.size());
  for (const auto& h : features) out.push_back(attention(h.q, h.k, h.v));
  return out;
}

class DenoiserBackend {
 public:
  virtual ~DenoiserBackend() = default;

  virtual std::string name() const = 0;

  // Noise estimate at training level `timestep`. Output shape equals z_t.
  virtual Tensor predict_noise(const Tensor& z_t, int timestep, const Conditioning& cond,
                               AttentionController* controller = nullptr) const = 0;

  // Stable across calls; indices contiguous from 0 in forward order.
  virtual std::vector<AttentionSite> list_attention_sites() const = 0;

  virtual Conditioning encode_prompt(std::string_view text) const = 0;

  // Digest over every weight; unchanged unless the model is trained.
  virtual std::string weights_digest() const = 0;

  // Shape of latents this backend consumes.
  virtual int latent_channels() const = 0;
  virtual int latent_height() const = 0;
  virtual int latent_width() const = 0;

  // Whether concurrent predict_noise calls are allowed.
  virtual bool thread_safe() const { return false; }
};

class LatentCodec {
 public:
  virtual ~LatentCodec() = default;
  virtual Tensor encode(const Image& image) const = 0;
  virtual Image decode(const Tensor& latent) const = 0;
  // Image pixels per latent cell along each axis.
  virtual int downsample_factor() const { return 1; }
  // Image channel count that encodes to the given latent channel count.
  virtual int image_channels(int latent_channels) const { return latent_channels; }
};

// Latent == pixels. decode(encode(x)) == x exactly.
class IdentityCodec final : public LatentCodec {
 public:
  Tensor encode(const Image& image) const override { return image.planes; }
  Image decode(const Tensor& latent) const override { return Image(latent); }
};

// Folds each f x f pixel block into channels: (C, H, W) -> (C*f*f, H/f, W/f).
// A pure permutation, so decode(encode(x)) == x exactly.
class SpaceToDepthCodec final : public LatentCodec {
 public:
  explicit SpaceToDepthCodec(int factor) : f_(factor) {
    if (factor < 1) throw ConfigurationError("space-to-depth factor must be >= 1");
  }

  int downsample_factor() const override { return f_; }
  int image_channels(int latent_channels) const override { return latent_channels / (f_ * f_); }

  Tensor encode(const Image& image) const override {
    const Tensor& x = image.planes;
    if (x.height % f_ != 0 || x.width % f_ != 0)
      throw ArgumentError("image " + x.shape_string() + " is not divisible by codec factor " +
                          std::to_string(f_));
    Tensor z(x.channels * f_ * f_, x.height / f_, x.width / f_);
    for (int c = 0; c < x.channels; ++c)
      for (int y = 0; y < x.height; ++y)
        for (int xx = 0; xx < x.width; ++xx)
          z.at(latent_channel(c, y % f_, xx % f_), y / f_, xx / f_) = x.at(c, y, xx);
    return z;
  }

  Image decode(const Tensor& z) const override {
    if (z.channels % (f_ * f_) != 0)
      throw ArgumentError("latent " + z.shape_string() + " has channels not divisible by " +
                          std::to_string(f_ * f_));
    Tensor x(z.channels / (f_ * f_), z.height * f_, z.width * f_);
    for (int c = 0; c < x.channels; ++c)
      for (int y = 0; y < x.height; ++y)
        for (int xx = 0; xx < x.width; ++xx)
          x.at(c, y, xx) = z.at(latent_channel(c, y % f_, xx % f_), y / f_, xx / f_);
    return Image(std::move(x));
  }

 private:
  int latent_channel(int c, int dy, int dx) const { return (c * f_ + dy) * f_ + dx; }
  int f_;
};

// Seeded hash-derived unit vector for a prompt. The empty prompt maps to the
// zero vector, which acts as the unconditional embedding.
inline std::vector<double> hashed_prompt_embedding(std::string_view text, int width) {
  std::vector<double> e(static_cast<std::size_t>(width), 0.0);
  if (text.empty()) return e;
  std::mt19937_64 rng(fnv1a64(text));
  std::normal_distribution<double> normal(0.0, 1.0);
  double norm = 0.0;
  for (double& v : e) {
    v = normal(rng);
    norm += v * v;
  }
  norm = std::sqrt(norm);
  for (double& v : e) v /= norm;
  return e;
}

// Noise prediction with classifier-free guidance. Scale 0 is a single
// conditional pass. A positive scale adds an unconditional pass (empty
// prompt) and combines eps_u + s * (eps_c - eps_u); the controller is only
// installed on the conditional pass.
inline Tensor guided_noise(const DenoiserBackend& backend, const Tensor& z_t, int timestep,
                           const Conditioning& cond, AttentionController* controller) {
  Tensor cond_eps = backend.predict_noise(z_t, timestep, cond, controller);
  if (cond.guidance_scale == 0.0) return cond_eps;
  const Conditioning uncond = backend.encode_prompt("");
  const Tensor uncond_eps = backend.predict_noise(z_t, timestep, uncond, nullptr);
  for (std::size_t i = 0; i < cond_eps.size(); ++i)
    cond_eps.data[i] = uncond_eps.data[i] +
                       cond.guidance_scale * (cond_eps.data[i] - uncond_eps.data[i]);
  return cond_eps;
}

}  // namespace stylectl
