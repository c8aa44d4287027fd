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

// Style attention control: dual-branch cross attention into reference
// keys/values, style guidance fusion, cross masks, and the output mixes used
// for background handling and chain-of-painting.

#include <Eigen/Dense>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <span>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "stylectl/errors.hpp"
#include "stylectl/sites.hpp"

namespace stylectl {

template <typename Scalar>
using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Matrix = RowMatrix<double>;

// Flattened binary mask at one attention resolution (row-major positions).
using MaskVector = std::vector<std::uint8_t>;

// ---------------------------------------------------------------------------
// Configuration

// When style guidance is active along the countdown index t = T..1.
enum class GuidanceWindow {
  Early,     // omega while t >= S (first denoising iterations), else 0
  Inverted,  // omega while t < S
};

// Which attention sites the controller takes over.
struct LayerGate {
  enum class Mode { Default, None, All, FromIndex, Indices };

  Mode mode = Mode::Default;
  int min_index = 0;
  std::vector<int> indices;

  static LayerGate none() { return {Mode::None, 0, {}}; }
  static LayerGate all() { return {Mode::All, 0, {}}; }
  static LayerGate from_index(int i) { return {Mode::FromIndex, i, {}}; }
  static LayerGate only(std::vector<int> idx) {
    return {Mode::Indices, 0, std::move(idx)};
  }

  // Accepts "default", "none", "all", "from:N", "indices:a,b,c".
  static LayerGate parse(std::string_view text) {
    auto to_int = [&](std::string_view s) {
      int v = 0;
      auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
      if (ec != std::errc() || p != s.data() + s.size() || v < 0)
        throw ConfigurationError("bad layer gate index '" + std::string(s) + "'");
      return v;
    };
    if (text == "default" || text.empty()) return {};
    if (text == "none") return none();
    if (text == "all") return all();
    if (text.starts_with("from:")) return from_index(to_int(text.substr(5)));
    if (text.starts_with("indices:")) {
      std::vector<int> idx;
      std::string_view rest = text.substr(8);
      while (!rest.empty()) {
        const auto comma = rest.find(',');
        idx.push_back(to_int(rest.substr(0, comma)));
        if (comma == std::string_view::npos) break;
        rest = rest.substr(comma + 1);
      }
      return only(std::move(idx));
    }
    throw ConfigurationError("unknown layer gate '" + std::string(text) + "'");
  }

  std::string to_string() const {
    switch (mode) {
      case Mode::Default:
        return "default";
      case Mode::None:
        return "none";
      case Mode::All:
        return "all";
      case Mode::FromIndex:
        return "from:" + std::to_string(min_index);
      case Mode::Indices: {
        std::string s = "indices:";
        for (std::size_t i = 0; i < indices.size(); ++i) {
          if (i) s += ',';
          s += std::to_string(indices[i]);
        }
        return s;
      }
    }
    return "default";
  }

  // Default: middle and decoder sites at or past a threshold. A 16-site
  // backend uses index 10; others start at their first decoder site.
  std::vector<int> resolve(std::span<const AttentionSite> sites) const {
    std::vector<int> out;
    switch (mode) {
      case Mode::None:
        break;
      case Mode::All:
        for (const auto& s : sites) out.push_back(s.index);
        break;
      case Mode::FromIndex:
        for (const auto& s : sites)
          if (s.index >= min_index) out.push_back(s.index);
        break;
      case Mode::Indices:
        for (int i : indices) {
          if (i < 0 || i >= static_cast<int>(sites.size()))
            throw ConfigurationError("layer gate index " + std::to_string(i) +
                                     " out of range");
          out.push_back(i);
        }
        std::sort(out.begin(), out.end());
        out.erase(std::unique(out.begin(), out.end()), out.end());
        break;
      case Mode::Default: {
        int threshold = static_cast<int>(sites.size());
        if (sites.size() == 16) {
          threshold = 10;
        } else {
          for (const auto& s : sites)
            if (s.part == SitePart::Decoder) {
              threshold = s.index;
              break;
            }
        }
        for (const auto& s : sites)
          if (s.part != SitePart::Encoder && s.index >= threshold)
            out.push_back(s.index);
        break;
      }
    }
    return out;
  }

  friend bool operator==(const LayerGate&, const LayerGate&) = default;
};

// All stylization knobs. Defaults: 50 steps, omega 1.2, guidance from step 35,
// prompt "head", classifier-free guidance scale 0.
struct ControlConfig {
  double omega = 1.2;
  int sac_start = 35;
  int steps = 50;
  LayerGate layer_gate;
  bool renormalize_masked_rows = false;
  GuidanceWindow window = GuidanceWindow::Early;
  std::string prompt = "head";
  double guidance_scale = 0.0;
  std::string schedule = "scaled-linear";

  void validate() const {
    if (!(omega >= 0.0) || !std::isfinite(omega))
      throw ArgumentError("omega must be finite and >= 0");
    if (steps < 1) throw ArgumentError("steps must be >= 1");
    if (sac_start < 0 || sac_start > steps)
      throw ArgumentError("sac_start must lie in [0, steps]");
    if (!(guidance_scale >= 0.0) || !std::isfinite(guidance_scale))
      throw ArgumentError("guidance_scale must be finite and >= 0");
  }

  friend bool operator==(const ControlConfig&, const ControlConfig&) = default;
};

// Guidance scale in effect at countdown index t.
inline double effective_omega(int t, const ControlConfig& cfg) {
  const bool active = cfg.window == GuidanceWindow::Early ? t >= cfg.sac_start
                                                          : t < cfg.sac_start;
  return active ? cfg.omega : 0.0;
}

// ---------------------------------------------------------------------------
// Attention primitives

template <typename Scalar>
void softmax_rows_inplace(RowMatrix<Scalar>& a) {
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    auto row = a.row(r);
    const Scalar m = row.maxCoeff();
    row = (row.array() - m).exp();
    row /= row.sum();
  }
}

// softmax(Q K^T / sqrt(d)), rows = queries.
template <typename Scalar>
RowMatrix<Scalar> attention_weights(const RowMatrix<Scalar>& q,
                                    const RowMatrix<Scalar>& k) {
  if (q.cols() != k.cols())
    throw ArgumentError("attention: query width " + std::to_string(q.cols()) +
                        " != key width " + std::to_string(k.cols()));
  if (q.cols() < 1 || k.rows() < 1) throw ArgumentError("attention: empty input");
  RowMatrix<Scalar> a = q * k.transpose();
  a *= Scalar(1) / std::sqrt(static_cast<Scalar>(q.cols()));
  softmax_rows_inplace(a);
  return a;
}

template <typename Scalar>
RowMatrix<Scalar> attention(const RowMatrix<Scalar>& q, const RowMatrix<Scalar>& k,
                            const RowMatrix<Scalar>& v) {
  if (k.rows() != v.rows())
    throw ArgumentError("attention: key/value length mismatch");
  return attention_weights(q, k) * v;
}

// O_s + omega (O_t - O_s) with O_x = Attn(Q_x, K_r, V_r). Evaluated as
// (1 - omega) O_s + omega O_t so omega = 0 and omega = 1 return a branch
// bit for bit.
template <typename Scalar>
RowMatrix<Scalar> style_guidance(const RowMatrix<Scalar>& o_target,
                                 const RowMatrix<Scalar>& o_source, double omega) {
  if (o_target.rows() != o_source.rows() || o_target.cols() != o_source.cols())
    throw ArgumentError("style guidance: branch shape mismatch");
  const Scalar w = static_cast<Scalar>(omega);
  return (Scalar(1) - w) * o_source + w * o_target;
}

template <typename Scalar>
RowMatrix<Scalar> style_attention(const RowMatrix<Scalar>& q_target,
                                  const RowMatrix<Scalar>& q_source,
                                  const RowMatrix<Scalar>& k_ref,
                                  const RowMatrix<Scalar>& v_ref, double omega) {
  if (q_target.rows() != q_source.rows() || q_target.cols() != q_source.cols())
    throw ArgumentError("style attention: query branch shape mismatch");
  return style_guidance<Scalar>(attention(q_target, k_ref, v_ref),
                                attention(q_source, k_ref, v_ref), omega);
}

// ---------------------------------------------------------------------------
// Masks

// Binary L_q x L_k matrix, M[i][j] = query_mask[i] * key_mask[j].
struct CrossMask {
  int rows = 0;
  int cols = 0;
  std::vector<std::uint8_t> bits;

  std::uint8_t at(int i, int j) const {
    return bits[static_cast<std::size_t>(i) * cols + j];
  }
  friend bool operator==(const CrossMask&, const CrossMask&) = default;
};

inline void require_binary(std::span<const std::uint8_t> m, const char* what) {
  for (auto b : m)
    if (b > 1) throw ArgumentError(std::string(what) + ": mask values must be 0 or 1");
}

inline MaskVector complement(std::span<const std::uint8_t> m) {
  MaskVector out(m.size());
  for (std::size_t i = 0; i < m.size(); ++i) out[i] = static_cast<std::uint8_t>(1 - m[i]);
  return out;
}

inline CrossMask cross_mask(std::span<const std::uint8_t> query_mask,
                            std::span<const std::uint8_t> key_mask) {
  require_binary(query_mask, "cross_mask");
  require_binary(key_mask, "cross_mask");
  CrossMask m{static_cast<int>(query_mask.size()), static_cast<int>(key_mask.size()), {}};
  m.bits.resize(query_mask.size() * key_mask.size());
  for (std::size_t i = 0; i < query_mask.size(); ++i)
    for (std::size_t j = 0; j < key_mask.size(); ++j)
      m.bits[i * key_mask.size() + j] =
          static_cast<std::uint8_t>(query_mask[i] * key_mask[j]);
  return m;
}

// (softmax(QK^T/sqrt d) masked elementwise) V. The mask is applied after the
// softmax; fully masked rows give zero outputs. With renormalize set, every
// row that keeps some weight is rescaled to sum to one.
template <typename Scalar>
RowMatrix<Scalar> masked_attention(const RowMatrix<Scalar>& q, const RowMatrix<Scalar>& k,
                                   const RowMatrix<Scalar>& v, const CrossMask& mask,
                                   bool renormalize = false) {
  if (k.rows() != v.rows())
    throw ArgumentError("masked attention: key/value length mismatch");
  if (mask.rows != q.rows() || mask.cols != k.rows())
    throw ArgumentError("masked attention: mask is " + std::to_string(mask.rows) + "x" +
                        std::to_string(mask.cols) + ", attention map is " +
                        std::to_string(q.rows()) + "x" + std::to_string(k.rows()));
  RowMatrix<Scalar> a = attention_weights(q, k);
  for (Eigen::Index i = 0; i < a.rows(); ++i) {
    for (Eigen::Index j = 0; j < a.cols(); ++j)
      if (!mask.at(static_cast<int>(i), static_cast<int>(j))) a(i, j) = Scalar(0);
    if (renormalize) {
      const Scalar s = a.row(i).sum();
      if (s > Scalar(0)) a.row(i) /= s;
    }
  }
  return a * v;
}

// Masked style attention for one (query mask, key mask) pair.
template <typename Scalar>
RowMatrix<Scalar> masked_style_attention(const RowMatrix<Scalar>& q_target,
                                         const RowMatrix<Scalar>& q_source,
                                         const RowMatrix<Scalar>& k_ref,
                                         const RowMatrix<Scalar>& v_ref,
                                         std::span<const std::uint8_t> source_mask,
                                         std::span<const std::uint8_t> ref_mask,
                                         double omega, bool renormalize = false) {
  const CrossMask m = cross_mask(source_mask, ref_mask);
  return style_guidance<Scalar>(masked_attention(q_target, k_ref, v_ref, m, renormalize),
                                masked_attention(q_source, k_ref, v_ref, m, renormalize),
                                omega);
}

namespace detail {

template <typename Scalar>
RowMatrix<Scalar> row_select(const RowMatrix<Scalar>& on, const RowMatrix<Scalar>& off,
                             std::span<const std::uint8_t> mask, const char* what) {
  if (on.rows() != off.rows() || on.cols() != off.cols())
    throw ArgumentError(std::string(what) + ": output shape mismatch");
  if (static_cast<Eigen::Index>(mask.size()) != on.rows())
    throw ArgumentError(std::string(what) + ": mask length " + std::to_string(mask.size()) +
                        " != " + std::to_string(on.rows()) + " rows");
  require_binary(mask, what);
  RowMatrix<Scalar> out(on.rows(), on.cols());
  for (Eigen::Index i = 0; i < on.rows(); ++i)
    out.row(i) = mask[static_cast<std::size_t>(i)] ? on.row(i) : off.row(i);
  return out;
}

}  // namespace detail

// M_s (x) O_fg + (1 - M_s) (x) O_bg, per query row.
template <typename Scalar>
RowMatrix<Scalar> background_mix(const RowMatrix<Scalar>& foreground,
                                 const RowMatrix<Scalar>& background,
                                 std::span<const std::uint8_t> source_mask) {
  return detail::row_select(foreground, background, source_mask, "background_mix");
}

// M_s (x) O_styled + (1 - M_s) (x) Attn(Q_s, K_s, V_s): unmasked rows keep the
// source branch's own self-attention output.
template <typename Scalar>
RowMatrix<Scalar> cop_mix(const RowMatrix<Scalar>& styled,
                          const RowMatrix<Scalar>& source_self,
                          std::span<const std::uint8_t> source_mask) {
  return detail::row_select(styled, source_self, source_mask, "cop_mix");
}

}  // namespace stylectl
