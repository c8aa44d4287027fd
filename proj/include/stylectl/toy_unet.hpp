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

// Desk-scale denoiser: a small time-conditioned U-Net with self-attention in
// the encoder, middle and decoder, trainable through nn::Tape.

#include <cmath>
#include <cstdint>
#include <memory>
#include <random>
#include <string>
#include <vector>

#include "stylectl/backend.hpp"
#include "stylectl/hashing.hpp"
#include "stylectl/nn/tape.hpp"

namespace stylectl {

struct ToyUNetConfig {
  int image_size = 64;
  int channels = 3;
  std::uint64_t seed = 0;
  int patch = 2;     // space-to-depth codec factor; 1 selects the identity codec
  int width0 = 16;   // feature width at latent resolution
  int width1 = 32;   // width at 1/2 latent resolution and below
  int heads = 2;
  int time_dim = 32;
  int embed_dim = 64;
  int cond_dim = 16;

  void validate() const {
    if (image_size != 32 && image_size != 64)
      throw ConfigurationError("toy backend supports image sizes 32 and 64, got " +
                               std::to_string(image_size));
    if (channels < 1) throw ConfigurationError("toy backend needs >= 1 channel");
    if (patch != 1 && patch != 2)
      throw ConfigurationError("toy backend patch must be 1 or 2, got " + std::to_string(patch));
    if (width0 < 1 || width1 < 1 || heads < 1 || width1 % heads != 0)
      throw ConfigurationError("toy backend widths must be positive and divisible by heads");
    if (time_dim < 2 || time_dim % 2 != 0 || embed_dim < 1 || cond_dim < 1)
      throw ConfigurationError("toy backend embedding sizes are invalid");
  }

  int latent_size() const noexcept { return image_size / patch; }
  int latent_channels() const noexcept { return channels * patch * patch; }

  friend bool operator==(const ToyUNetConfig&, const ToyUNetConfig&) = default;
};

class ToyUNet final : public DenoiserBackend {
 public:
  using Id = nn::Tape::Id;

  explicit ToyUNet(ToyUNetConfig cfg) : cfg_(cfg) {
    cfg_.validate();
    build();
  }

  const ToyUNetConfig& config() const noexcept { return cfg_; }
  std::vector<nn::Parameter>& parameters() noexcept { return params_; }
  const std::vector<nn::Parameter>& parameters() const noexcept { return params_; }

  std::string name() const override { return "toy-unet"; }
  int latent_channels() const override { return cfg_.latent_channels(); }
  int latent_height() const override { return cfg_.latent_size(); }
  int latent_width() const override { return cfg_.latent_size(); }

  // The codec this backend was trained with.
  std::shared_ptr<const LatentCodec> codec() const {
    if (cfg_.patch == 1) return std::make_shared<IdentityCodec>();
    return std::make_shared<SpaceToDepthCodec>(cfg_.patch);
  }
  std::vector<AttentionSite> list_attention_sites() const override { return sites_; }

  Conditioning encode_prompt(std::string_view text) const override {
    return {std::string(text), hashed_prompt_embedding(text, cfg_.cond_dim), 0.0};
  }

  Tensor predict_noise(const Tensor& z_t, int timestep, const Conditioning& cond,
                       AttentionController* controller = nullptr) const override {
    nn::Tape tape(false);
    const Id out = forward_graph(*this, tape, z_t, timestep, cond, controller);
    return to_tensor(tape.value(out));
  }

  // Recording forward pass for training; parameters receive gradients on
  // tape.backward().
  Id forward(nn::Tape& tape, const Tensor& z_t, int timestep, const Conditioning& cond) {
    return forward_graph(*this, tape, z_t, timestep, cond, nullptr);
  }

  std::string weights_digest() const override {
    Sha256 h;
    for (const auto& p : params_) {
      h.update(p.name);
      const std::int64_t dims[2] = {p.value.rows(), p.value.cols()};
      h.update(dims, sizeof(dims));
      h.update(p.value.data(), static_cast<std::size_t>(p.value.size()) * sizeof(double));
    }
    return h.hex();
  }

  Tensor to_tensor(const Matrix& m) const {
    Tensor t(cfg_.latent_channels(), cfg_.latent_size(), cfg_.latent_size());
    std::copy(m.data(), m.data() + m.size(), t.data.begin());
    return t;
  }

 private:
  struct Conv {
    int w = -1, b = -1;
  };
  struct Linear {
    int w = -1, b = -1;
  };
  struct Res {
    Conv c1, c2;
    Linear temb;
    int skip = -1;
  };
  struct Attn {
    int wq = -1, wk = -1, wv = -1, wo = -1, bo = -1;
    int site = -1;
  };

  int add_param(const std::string& name, Eigen::Index rows, Eigen::Index cols, double stddev) {
    nn::Parameter p;
    p.name = name;
    p.value = Matrix::Zero(rows, cols);
    if (stddev > 0.0) {
      std::normal_distribution<double> normal(0.0, stddev);
      for (Eigen::Index i = 0; i < p.value.size(); ++i) p.value.data()[i] = normal(rng_);
    }
    p.grad = Matrix::Zero(rows, cols);
    params_.push_back(std::move(p));
    return static_cast<int>(params_.size()) - 1;
  }

  Conv make_conv(const std::string& name, int cin, int cout, double gain = 1.0) {
    const double std = gain * std::sqrt(2.0 / (cin * 9.0));
    return {add_param(name + ".w", cout, cin * 9, std), add_param(name + ".b", cout, 1, 0.0)};
  }

  Linear make_linear(const std::string& name, int in, int out, double gain = 1.0,
                     bool bias = true) {
    Linear l;
    l.w = add_param(name + ".w", out, in, gain * std::sqrt(1.0 / in));
    if (bias) l.b = add_param(name + ".b", out, 1, 0.0);
    return l;
  }

  Res make_res(const std::string& name, int cin, int cout) {
    Res r;
    r.c1 = make_conv(name + ".conv1", cin, cout);
    r.temb = make_linear(name + ".temb", cfg_.embed_dim, cout);
    r.c2 = make_conv(name + ".conv2", cout, cout, 0.3);
    if (cin != cout) r.skip = add_param(name + ".skip", cout, cin, std::sqrt(1.0 / cin));
    return r;
  }

  Attn make_attn(const std::string& name, SitePart part, int res, int dim) {
    Attn a;
    const double s = std::sqrt(1.0 / dim);
    a.wq = add_param(name + ".wq", dim, dim, s);
    a.wk = add_param(name + ".wk", dim, dim, s);
    a.wv = add_param(name + ".wv", dim, dim, s);
    a.wo = add_param(name + ".wo", dim, dim, 0.5 * s);
    a.bo = add_param(name + ".bo", dim, 1, 0.0);
    a.site = static_cast<int>(sites_.size());
    sites_.push_back({a.site, part, res, res, dim, cfg_.heads});
    return a;
  }

  void build() {
    rng_.seed(cfg_.seed);
    const int s = cfg_.latent_size();
    const int c0 = cfg_.width0, c1 = cfg_.width1;
    time1_ = make_linear("time.fc1", cfg_.time_dim, cfg_.embed_dim);
    time2_ = make_linear("time.fc2", cfg_.embed_dim, cfg_.embed_dim);
    cond_ = make_linear("cond.proj", cfg_.cond_dim, cfg_.embed_dim, 1.0, false);
    conv_in_ = make_conv("in", cfg_.latent_channels(), c0);
    e0_ = make_res("enc0", c0, c0);
    e1_ = make_res("enc1", c0, c1);
    e2_ = make_res("enc2", c1, c1);
    a_e0_ = make_attn("enc2.attn", SitePart::Encoder, s / 4, c1);
    e3_ = make_res("enc3", c1, c1);
    a_e1_ = make_attn("enc3.attn", SitePart::Encoder, s / 8, c1);
    mid_ = make_res("mid", c1, c1);
    a_mid_ = make_attn("mid.attn", SitePart::Middle, s / 8, c1);
    d3_ = make_res("dec3", c1, c1);
    a_d0_ = make_attn("dec3.attn", SitePart::Decoder, s / 8, c1);
    d2_ = make_res("dec2", c1, c1);
    a_d1_ = make_attn("dec2.attn", SitePart::Decoder, s / 4, c1);
    d1_ = make_res("dec1", c1, c0);
    a_d2_ = make_attn("dec1.attn", SitePart::Decoder, s / 2, c0);
    d0_ = make_res("dec0", c0, c0);
    conv_out_ = make_conv("out", c0, cfg_.latent_channels(), 0.1);
    validate_sites(sites_);
  }

  Matrix timestep_embedding(int timestep) const {
    const int half = cfg_.time_dim / 2;
    Matrix e(cfg_.time_dim, 1);
    for (int i = 0; i < half; ++i) {
      const double freq = std::exp(-std::log(10000.0) * i / half);
      e(i, 0) = std::sin(timestep * freq);
      e(half + i, 0) = std::cos(timestep * freq);
    }
    return e;
  }

  template <typename Self>
  static Id linear(Self& self, nn::Tape& tape, const Linear& l, Id x) {
    Id y = tape.matmul(tape.param(self.params_[l.w]), x);
    if (l.b >= 0) y = tape.add_bias(y, tape.param(self.params_[l.b]));
    return y;
  }

  template <typename Self>
  static Id conv(Self& self, nn::Tape& tape, const Conv& c, Id x, int res) {
    return tape.conv3x3(x, tape.param(self.params_[c.w]), tape.param(self.params_[c.b]), res,
                        res);
  }

  template <typename Self>
  static Id res_block(Self& self, nn::Tape& tape, const Res& r, Id x, Id temb, int res) {
    Id a = conv(self, tape, r.c1, tape.silu(x), res);
    a = tape.add_bias(a, linear(self, tape, r.temb, temb));
    const Id b = conv(self, tape, r.c2, tape.silu(a), res);
    const Id skip = r.skip >= 0 ? tape.matmul(tape.param(self.params_[r.skip]), x) : x;
    return tape.add(skip, b);
  }

  template <typename Self>
  static Id attn_block(Self& self, nn::Tape& tape, const Attn& a, Id x,
                       AttentionController* controller) {
    const AttentionSite& site = self.sites_[static_cast<std::size_t>(a.site)];
    const Id q = tape.matmul(tape.param(self.params_[a.wq]), x);
    const Id k = tape.matmul(tape.param(self.params_[a.wk]), x);
    const Id v = tape.matmul(tape.param(self.params_[a.wv]), x);
    const int heads = site.heads;
    const int dh = site.head_dim();
    Id mixed;
    if (!tape.recording()) {
      BranchFeatures features(static_cast<std::size_t>(heads));
      for (int h = 0; h < heads; ++h) {
        auto& f = features[static_cast<std::size_t>(h)];
        f.q = tape.value(q).middleRows(h * dh, dh).transpose();
        f.k = tape.value(k).middleRows(h * dh, dh).transpose();
        f.v = tape.value(v).middleRows(h * dh, dh).transpose();
      }
      std::vector<Matrix> outs;
      if (controller != nullptr && controller->intercepts(site)) {
        outs = controller->attend(site, features);
        if (outs.size() != features.size())
          throw ArgumentError("controller returned wrong head count at site " +
                              std::to_string(site.index));
      } else {
        outs = self_attention(features);
      }
      Matrix cat(site.dim, site.spatial_len());
      for (int h = 0; h < heads; ++h) {
        const Matrix& o = outs[static_cast<std::size_t>(h)];
        if (o.rows() != site.spatial_len() || o.cols() != dh)
          throw ArgumentError("controller output has wrong shape at site " +
                              std::to_string(site.index));
        cat.middleRows(h * dh, dh) = o.transpose();
      }
      mixed = tape.input(std::move(cat));
    } else {
      std::vector<Id> parts;
      const double inv = 1.0 / std::sqrt(static_cast<double>(dh));
      for (int h = 0; h < heads; ++h) {
        const Id qh = tape.slice_rows(q, h * dh, dh);
        const Id kh = tape.slice_rows(k, h * dh, dh);
        const Id vh = tape.slice_rows(v, h * dh, dh);
        const Id scores = tape.scale(tape.matmul(tape.transpose(qh), kh), inv);
        const Id weights = tape.softmax_rows(scores);
        parts.push_back(tape.transpose(tape.matmul(weights, tape.transpose(vh))));
      }
      mixed = tape.concat_rows(parts);
    }
    const Id proj = tape.add_bias(tape.matmul(tape.param(self.params_[a.wo]), mixed),
                                  tape.param(self.params_[a.bo]));
    return tape.add(x, proj);
  }

  template <typename Self>
  static Id forward_graph(Self& self, nn::Tape& tape, const Tensor& z_t, int timestep,
                          const Conditioning& cond, AttentionController* controller) {
    const auto& cfg = self.cfg_;
    const int s = cfg.latent_size();
    const int lc = cfg.latent_channels();
    if (z_t.channels != lc || z_t.height != s || z_t.width != s)
      throw ArgumentError("toy backend expects latents " + std::to_string(lc) + "x" +
                          std::to_string(s) + "x" + std::to_string(s) + ", got " +
                          z_t.shape_string());
    if (static_cast<int>(cond.embedding.size()) != cfg.cond_dim)
      throw ArgumentError("conditioning embedding width " +
                          std::to_string(cond.embedding.size()) + " != " +
                          std::to_string(cfg.cond_dim));

    Matrix zin(lc, static_cast<Eigen::Index>(s) * s);
    std::copy(z_t.data.begin(), z_t.data.end(), zin.data());
    Matrix cvec(cfg.cond_dim, 1);
    for (int i = 0; i < cfg.cond_dim; ++i) cvec(i, 0) = cond.embedding[static_cast<std::size_t>(i)];

    Id temb = linear(self, tape, self.time1_, tape.input(self.timestep_embedding(timestep)));
    temb = linear(self, tape, self.time2_, tape.silu(temb));
    temb = tape.add(temb, linear(self, tape, self.cond_, tape.input(std::move(cvec))));
    const Id t_act = tape.silu(temb);

    Id h = conv(self, tape, self.conv_in_, tape.input(std::move(zin)), s);
    h = res_block(self, tape, self.e0_, h, t_act, s);
    const Id skip0 = h;
    h = tape.avgpool2(h, s, s);
    h = res_block(self, tape, self.e1_, h, t_act, s / 2);
    const Id skip1 = h;
    h = tape.avgpool2(h, s / 2, s / 2);
    h = res_block(self, tape, self.e2_, h, t_act, s / 4);
    h = attn_block(self, tape, self.a_e0_, h, controller);
    const Id skip2 = h;
    h = tape.avgpool2(h, s / 4, s / 4);
    h = res_block(self, tape, self.e3_, h, t_act, s / 8);
    h = attn_block(self, tape, self.a_e1_, h, controller);

    h = res_block(self, tape, self.mid_, h, t_act, s / 8);
    h = attn_block(self, tape, self.a_mid_, h, controller);

    h = res_block(self, tape, self.d3_, h, t_act, s / 8);
    h = attn_block(self, tape, self.a_d0_, h, controller);
    h = tape.add(tape.upsample2(h, s / 8, s / 8), skip2);
    h = res_block(self, tape, self.d2_, h, t_act, s / 4);
    h = attn_block(self, tape, self.a_d1_, h, controller);
    h = tape.add(tape.upsample2(h, s / 4, s / 4), skip1);
    h = res_block(self, tape, self.d1_, h, t_act, s / 2);
    h = attn_block(self, tape, self.a_d2_, h, controller);
    h = tape.add(tape.upsample2(h, s / 2, s / 2), skip0);
    h = res_block(self, tape, self.d0_, h, t_act, s);
    return conv(self, tape, self.conv_out_, tape.silu(h), s);
  }

  ToyUNetConfig cfg_;
  std::mt19937_64 rng_;
  std::vector<nn::Parameter> params_;
  std::vector<AttentionSite> sites_;

  Linear time1_, time2_, cond_;
  Conv conv_in_, conv_out_;
  Res e0_, e1_, e2_, e3_, mid_, d3_, d2_, d1_, d0_;
  Attn a_e0_, a_e1_, a_mid_, a_d0_, a_d1_, a_d2_;
};

// Untrained toy backend with seeded initialization.
inline ToyUNet toy_backend(int image_size, int channels, std::uint64_t seed) {
  ToyUNetConfig cfg;
  cfg.image_size = image_size;
  cfg.channels = channels;
  cfg.seed = seed;
  return ToyUNet(cfg);
}

}  // namespace stylectl
