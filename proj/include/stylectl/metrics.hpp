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

// Style distance and identity similarity with pluggable feature adapters,
// plus the edge-overlap structural measure.

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "stylectl/attention_control.hpp"
#include "stylectl/errors.hpp"
#include "stylectl/image.hpp"
#include "stylectl/image_io.hpp"

namespace stylectl {

// One layer's activations: channels x positions.
using FeatureMap = Matrix;

class FeatureExtractor {
 public:
  virtual ~FeatureExtractor() = default;
  virtual std::string name() const = 0;
  virtual std::vector<std::string> layers() const = 0;
  // One map per entry of layers(), same order.
  virtual std::vector<FeatureMap> extract(const Image& image) const = 0;
};

class IdentityEmbedder {
 public:
  virtual ~IdentityEmbedder() = default;
  virtual std::string name() const = 0;
  // Unit-norm embedding.
  virtual std::vector<double> embed(const Image& image) const = 0;
};

enum class StyleDistance { MeanStd, Gram };

// ---------------------------------------------------------------------------
// Built-in adapters

namespace detail {

inline Image box_downsample2(const Image& img) {
  const int w = std::max(1, img.width() / 2), h = std::max(1, img.height() / 2);
  Image out(w, h, img.channels());
  for (int c = 0; c < img.channels(); ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        double s = 0.0;
        int n = 0;
        for (int dy = 0; dy < 2; ++dy)
          for (int dx = 0; dx < 2; ++dx) {
            const int yy = 2 * y + dy, xx = 2 * x + dx;
            if (yy < img.height() && xx < img.width()) {
              s += img.at(c, yy, xx);
              ++n;
            }
          }
        out.at(c, y, x) = s / n;
      }
  return out;
}

// Sobel gradient magnitude of luma, scaled so a unit step reads 1.
inline std::vector<double> gradient_magnitude(const Image& img) {
  const Image g = to_gray(img);
  const int w = g.width(), h = g.height();
  std::vector<double> out(static_cast<std::size_t>(w) * h, 0.0);
  auto p = [&](int y, int x) {
    return g.at(0, std::clamp(y, 0, h - 1), std::clamp(x, 0, w - 1));
  };
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x) {
      const double gx = (p(y - 1, x + 1) + 2 * p(y, x + 1) + p(y + 1, x + 1)) -
                        (p(y - 1, x - 1) + 2 * p(y, x - 1) + p(y + 1, x - 1));
      const double gy = (p(y + 1, x - 1) + 2 * p(y + 1, x) + p(y + 1, x + 1)) -
                        (p(y - 1, x - 1) + 2 * p(y - 1, x) + p(y - 1, x + 1));
      out[static_cast<std::size_t>(y) * w + x] = std::sqrt(gx * gx + gy * gy) / 4.0;
    }
  return out;
}

}  // namespace detail

// Image planes plus luma gradient magnitude at full, half and quarter scale.
class PixelPyramidExtractor final : public FeatureExtractor {
 public:
  std::string name() const override { return "pixel-pyramid"; }
  std::vector<std::string> layers() const override { return {"scale1", "scale2", "scale4"}; }
  std::vector<FeatureMap> extract(const Image& image) const override {
    std::vector<FeatureMap> out;
    Image level = to_rgb(image);
    for (int i = 0; i < 3; ++i) {
      if (i > 0) level = detail::box_downsample2(level);
      const int n = level.width() * level.height();
      FeatureMap f(level.channels() + 1, n);
      for (int c = 0; c < level.channels(); ++c)
        for (int p = 0; p < n; ++p)
          f(c, p) = level.planes.data[static_cast<std::size_t>(c) * n + p];
      const auto g = detail::gradient_magnitude(level);
      for (int p = 0; p < n; ++p) f(level.channels(), p) = g[static_cast<std::size_t>(p)];
      out.push_back(std::move(f));
    }
    return out;
  }
};

// Mean-centered 16x16 luma thumbnail, normalized. A flat image has no
// structure to embed and maps to the constant unit vector.
class ThumbnailEmbedder final : public IdentityEmbedder {
 public:
  std::string name() const override { return "thumbnail"; }
  std::vector<double> embed(const Image& image) const override {
    const Image t = resize_bilinear(to_gray(image), 16, 16);
    std::vector<double> v(t.planes.data);
    double mean = 0.0;
    for (double x : v) mean += x;
    mean /= static_cast<double>(v.size());
    double norm = 0.0;
    for (double& x : v) {
      x -= mean;
      norm += x * x;
    }
    norm = std::sqrt(norm);
    if (norm < 1e-12) {
      for (double& x : v) x = 1.0 / std::sqrt(static_cast<double>(v.size()));
      return v;
    }
    for (double& x : v) x /= norm;
    return v;
  }
};

// ---------------------------------------------------------------------------
// Metrics

struct ChannelStats {
  std::vector<double> mean;
  std::vector<double> stddev;  // population
};

inline ChannelStats channel_stats(const FeatureMap& f) {
  ChannelStats s;
  const double n = static_cast<double>(f.cols());
  for (Eigen::Index c = 0; c < f.rows(); ++c) {
    const double mu = f.row(c).sum() / n;
    const double var = (f.row(c).array() - mu).square().sum() / n;
    s.mean.push_back(mu);
    s.stddev.push_back(std::sqrt(var));
  }
  return s;
}

// Distance between two feature maps of one layer.
inline double layer_style_distance(const FeatureMap& a, const FeatureMap& b,
                                   StyleDistance mode = StyleDistance::MeanStd) {
  if (a.rows() != b.rows())
    throw ArgumentError("feature maps have " + std::to_string(a.rows()) + " and " +
                        std::to_string(b.rows()) + " channels");
  if (mode == StyleDistance::Gram) {
    const Matrix ga = a * a.transpose() / static_cast<double>(a.cols());
    const Matrix gb = b * b.transpose() / static_cast<double>(b.cols());
    return (ga - gb).norm();
  }
  const ChannelStats sa = channel_stats(a), sb = channel_stats(b);
  double dm = 0.0, ds = 0.0;
  for (std::size_t c = 0; c < sa.mean.size(); ++c) {
    dm += (sa.mean[c] - sb.mean[c]) * (sa.mean[c] - sb.mean[c]);
    ds += (sa.stddev[c] - sb.stddev[c]) * (sa.stddev[c] - sb.stddev[c]);
  }
  return std::sqrt(dm) + std::sqrt(ds);
}

inline double style_loss(const Image& output, const Image& reference,
                         const FeatureExtractor* extractor,
                         StyleDistance mode = StyleDistance::MeanStd) {
  if (extractor == nullptr) throw CapabilityError("no feature extractor is registered");
  const auto fa = extractor->extract(output);
  const auto fb = extractor->extract(reference);
  if (fa.size() != fb.size() || fa.size() != extractor->layers().size())
    throw Error("feature extractor '" + extractor->name() + "' returned an inconsistent layer count");
  double total = 0.0;
  for (std::size_t l = 0; l < fa.size(); ++l) total += layer_style_distance(fa[l], fb[l], mode);
  return total;
}

inline double cosine_similarity(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.empty())
    throw ArgumentError("embeddings have different or zero length");
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) throw NumericalDomainError("zero-length embedding");
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

inline double id_similarity(const Image& output, const Image& source,
                            const IdentityEmbedder* embedder) {
  if (embedder == nullptr) throw CapabilityError("no identity embedder is registered");
  return cosine_similarity(embedder->embed(output), embedder->embed(source));
}

// ---------------------------------------------------------------------------
// Batch evaluation and the report file

struct MetricPair {
  std::string id;
  Image output;
  Image source;
  Image reference;
};

struct MetricRow {
  std::string pair_id;
  double style_loss = 0.0;
  double id_similarity = 0.0;

  friend bool operator==(const MetricRow&, const MetricRow&) = default;
};

struct MetricReport {
  std::string extractor;
  std::string embedder;
  std::vector<std::string> layers;
  std::vector<MetricRow> rows;
  double mean_style_loss = 0.0;
  double mean_id_similarity = 0.0;

  friend bool operator==(const MetricReport&, const MetricReport&) = default;
};

inline void finalize_means(MetricReport& r) {
  double s = 0.0, i = 0.0;
  for (const auto& row : r.rows) {
    s += row.style_loss;
    i += row.id_similarity;
  }
  const double n = static_cast<double>(r.rows.size());
  r.mean_style_loss = r.rows.empty() ? 0.0 : s / n;
  r.mean_id_similarity = r.rows.empty() ? 0.0 : i / n;
}

inline MetricReport evaluate_batch(std::span<const MetricPair> pairs,
                                   const FeatureExtractor* extractor,
                                   const IdentityEmbedder* embedder,
                                   StyleDistance mode = StyleDistance::MeanStd) {
  if (pairs.empty()) throw ArgumentError("metric evaluation needs at least one pair");
  if (extractor == nullptr) throw CapabilityError("no feature extractor is registered");
  if (embedder == nullptr) throw CapabilityError("no identity embedder is registered");
  MetricReport r;
  r.extractor = extractor->name();
  r.embedder = embedder->name();
  r.layers = extractor->layers();
  for (const auto& p : pairs)
    r.rows.push_back({p.id, style_loss(p.output, p.reference, extractor, mode),
                      id_similarity(p.output, p.source, embedder)});
  finalize_means(r);
  return r;
}

// Comment line with adapters and layers, the header row, one row per pair,
// then the aggregate row with pair_id "mean". Values use 17 significant
// digits so they parse back exactly.
inline std::string report_to_csv(const MetricReport& r) {
  std::ostringstream os;
  os << "# extractor=" << r.extractor << " embedder=" << r.embedder << " layers=";
  for (std::size_t i = 0; i < r.layers.size(); ++i) os << (i ? ";" : "") << r.layers[i];
  os << "\npair_id,style_loss,id_similarity\n";
  char buf[96];
  auto line = [&](const std::string& id, double s, double i) {
    std::snprintf(buf, sizeof buf, ",%.17g,%.17g\n", s, i);
    os << id << buf;
  };
  for (const auto& row : r.rows) line(row.pair_id, row.style_loss, row.id_similarity);
  line("mean", r.mean_style_loss, r.mean_id_similarity);
  return os.str();
}

inline MetricReport report_from_csv(const std::string& text) {
  MetricReport r;
  std::istringstream is(text);
  std::string ln;
  bool header = false, saw_mean = false;
  while (std::getline(is, ln)) {
    if (!ln.empty() && ln.back() == '\r') ln.pop_back();
    if (ln.empty()) continue;
    if (ln.front() == '#') {
      std::istringstream ks(ln.substr(1));
      std::string kv;
      while (ks >> kv) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) continue;
        const std::string k = kv.substr(0, eq), v = kv.substr(eq + 1);
        if (k == "extractor") r.extractor = v;
        else if (k == "embedder") r.embedder = v;
        else if (k == "layers") {
          std::istringstream ls(v);
          std::string layer;
          while (std::getline(ls, layer, ';'))
            if (!layer.empty()) r.layers.push_back(layer);
        }
      }
      continue;
    }
    if (!header) {
      if (ln != "pair_id,style_loss,id_similarity")
        throw IoError("metric report: unexpected header '" + ln + "'");
      header = true;
      continue;
    }
    const auto c1 = ln.find(','), c2 = ln.find(',', c1 == std::string::npos ? c1 : c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos)
      throw IoError("metric report: malformed row '" + ln + "'");
    MetricRow row{ln.substr(0, c1), std::stod(ln.substr(c1 + 1, c2 - c1 - 1)),
                  std::stod(ln.substr(c2 + 1))};
    if (row.pair_id == "mean") {
      r.mean_style_loss = row.style_loss;
      r.mean_id_similarity = row.id_similarity;
      saw_mean = true;
    } else {
      r.rows.push_back(std::move(row));
    }
  }
  if (!header || !saw_mean) throw IoError("metric report: missing header or aggregate row");
  return r;
}

// ---------------------------------------------------------------------------
// Structure

// Binary edge map: Sobel luma gradient magnitude >= threshold.
inline std::vector<std::uint8_t> edge_map(const Image& image, double threshold = 0.1) {
  const auto g = detail::gradient_magnitude(image);
  std::vector<std::uint8_t> e(g.size());
  for (std::size_t i = 0; i < g.size(); ++i) e[i] = g[i] >= threshold ? 1 : 0;
  return e;
}

// F1 score of edge pixels matched within one pixel (8-neighbourhood).
// Two edgeless images score 1.
inline double edge_overlap(const Image& a, const Image& b, double threshold = 0.1) {
  if (a.width() != b.width() || a.height() != b.height())
    throw ArgumentError("edge_overlap: image sizes differ");
  const int w = a.width(), h = a.height();
  const auto ea = edge_map(a, threshold), eb = edge_map(b, threshold);
  auto matched = [&](const std::vector<std::uint8_t>& from, const std::vector<std::uint8_t>& to) {
    std::size_t n = 0, m = 0;
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) {
        if (!from[static_cast<std::size_t>(y) * w + x]) continue;
        ++n;
        bool hit = false;
        for (int dy = -1; dy <= 1 && !hit; ++dy)
          for (int dx = -1; dx <= 1 && !hit; ++dx) {
            const int yy = y + dy, xx = x + dx;
            hit = yy >= 0 && yy < h && xx >= 0 && xx < w && to[static_cast<std::size_t>(yy) * w + xx];
          }
        m += hit;
      }
    return std::pair{n, m};
  };
  const auto [na, ma] = matched(ea, eb);
  const auto [nb, mb] = matched(eb, ea);
  if (na == 0 && nb == 0) return 1.0;
  if (na == 0 || nb == 0) return 0.0;
  const double p = static_cast<double>(ma) / na, r = static_cast<double>(mb) / nb;
  return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0;
}

}  // namespace stylectl
