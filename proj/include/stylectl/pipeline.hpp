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

// Dual DDIM inversion, the three-branch denoising loop with the style
// attention controller installed, and decoding.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "stylectl/attention_control.hpp"
#include "stylectl/backend.hpp"
#include "stylectl/errors.hpp"
#include "stylectl/image.hpp"
#include "stylectl/image_io.hpp"
#include "stylectl/masking.hpp"
#include "stylectl/schedule.hpp"

namespace stylectl {

using ProgressCallback = std::function<void(int completed, int total)>;

struct StylizeRequest {
  Image source;
  Image reference;
  ControlConfig cfg;
  std::optional<Mask> source_mask;
  // Defaults to the source mask when only that one is given.
  std::optional<Mask> reference_mask;
  // Masked rows take the styled output, unmasked rows keep the source's own
  // self-attention. Without a mask this flag has no effect.
  bool cop_mode = false;
  bool keep_trajectories = false;
  // When set, per-step query and attention snapshots are written here.
  std::optional<std::filesystem::path> debug_dir;
  ProgressCallback on_progress;
};

struct StylizeResult {
  Image output;
  std::optional<LatentTrajectory> source_trajectory;
  std::optional<LatentTrajectory> reference_trajectory;
  std::vector<std::filesystem::path> debug_files;
  double wall_time = 0.0;  // seconds
};

// ---------------------------------------------------------------------------
// Inversion

// Inversion from code t to t+1 queries the noise estimate at the level of
// t+1; level 0 is never seen in training.
inline LatentTrajectory ddim_encode_latent(const Tensor& z0, const DenoiserBackend& backend,
                                           const NoiseSchedule& sched, const Conditioning& cond) {
  LatentTrajectory traj;
  traj.codes.reserve(static_cast<std::size_t>(sched.steps()) + 1);
  traj.codes.push_back({z0, 0});
  for (int t = 0; t < sched.steps(); ++t) {
    const LatentCode& cur = traj.codes.back();
    const Tensor eps = guided_noise(backend, cur.data, sched.train_timestep(t + 1), cond, nullptr);
    LatentCode next = ddim_inverse_step(cur, eps, t, sched);
    if (!next.data.all_finite()) throw InversionError("latent is not finite", t + 1);
    traj.codes.push_back(std::move(next));
  }
  return traj;
}

inline LatentTrajectory ddim_encode(const Image& image, const DenoiserBackend& backend,
                                    const LatentCodec& codec, const ControlConfig& cfg) {
  cfg.validate();
  const Tensor z0 = codec.encode(image);
  if (z0.channels != backend.latent_channels() || z0.height != backend.latent_height() ||
      z0.width != backend.latent_width())
    throw ArgumentError("encoded latent " + z0.shape_string() +
                        " does not match the backend latent shape");
  Conditioning cond = backend.encode_prompt(cfg.prompt);
  cond.guidance_scale = cfg.guidance_scale;
  return ddim_encode_latent(z0, backend, build_schedule(cfg.steps, cfg.schedule), cond);
}

// ---------------------------------------------------------------------------
// Controllers

using SiteFeatures = std::map<int, BranchFeatures>;

// Records projections at the listed sites and leaves attention unchanged.
class FeatureRecorder final : public AttentionController {
 public:
  FeatureRecorder(std::set<int> sites, SiteFeatures* sink)
      : sites_(std::move(sites)), sink_(sink) {}

  bool intercepts(const AttentionSite& site) const override {
    return sites_.count(site.index) != 0;
  }
  std::vector<Matrix> attend(const AttentionSite& site,
                             const BranchFeatures& features) override {
    (*sink_)[site.index] = features;
    return self_attention(features);
  }

 private:
  std::set<int> sites_;
  SiteFeatures* sink_;
};

// One forward pass of `z` that returns the projections at `sites`. The noise
// output of that pass is discarded.
inline SiteFeatures harvest_features(const DenoiserBackend& backend, const Tensor& z,
                                     int timestep, const Conditioning& cond,
                                     const std::set<int>& sites) {
  SiteFeatures out;
  if (sites.empty()) return out;
  FeatureRecorder rec(sites, &out);
  Conditioning single = cond;
  single.guidance_scale = 0.0;
  (void)backend.predict_noise(z, timestep, single, &rec);
  return out;
}

// Source and reference mask pyramids; both null for unmasked control.
struct SacMasks {
  const MaskPyramid* source = nullptr;
  const MaskPyramid* reference = nullptr;
};

// Style attention control for the target branch at one denoising step.
class StyleAttentionController final : public AttentionController {
 public:

  // Sees the target and reference features of every intercepted site; used
  // for debug snapshots.
  using Observer = std::function<void(const AttentionSite&, const BranchFeatures& target,
                                      const BranchFeatures& reference)>;

  StyleAttentionController(std::set<int> sites, const SiteFeatures* source,
                           const SiteFeatures* reference, double omega, SacMasks masks = {},
                           bool cop_mode = false, bool renormalize = false)
      : sites_(std::move(sites)),
        source_(source),
        reference_(reference),
        omega_(omega),
        masks_(masks),
        cop_mode_(cop_mode),
        renormalize_(renormalize) {}

  void set_observer(Observer o) { observer_ = std::move(o); }
  int calls() const noexcept { return calls_; }

  bool intercepts(const AttentionSite& site) const override {
    return sites_.count(site.index) != 0;
  }

  std::vector<Matrix> attend(const AttentionSite& site,
                             const BranchFeatures& target) override {
    ++calls_;
    const BranchFeatures& src = lookup(*source_, site, "source");
    const BranchFeatures& ref = lookup(*reference_, site, "reference");
    if (src.size() != target.size() || ref.size() != target.size())
      throw ArgumentError("head count differs between branches at site " +
                          std::to_string(site.index));
    if (observer_) observer_(site, target, ref);

    std::vector<Matrix> out;
    out.reserve(target.size());
    const bool masked = masks_.source != nullptr;
    const MaskVector* ms = masked ? &masks_.source->at(site.index) : nullptr;
    const MaskVector* mr = masked ? &masks_.reference->at(site.index) : nullptr;
    std::optional<MaskVector> ms_bg, mr_bg;
    if (masked && !cop_mode_) {
      ms_bg = complement(*ms);
      mr_bg = complement(*mr);
    }
    for (std::size_t h = 0; h < target.size(); ++h) {
      const Matrix& qt = target[h].q;
      const Matrix& qs = src[h].q;
      const Matrix& kr = ref[h].k;
      const Matrix& vr = ref[h].v;
      if (!masked) {
        out.push_back(style_attention(qt, qs, kr, vr, omega_));
        continue;
      }
      Matrix fg = masked_style_attention(qt, qs, kr, vr, *ms, *mr, omega_, renormalize_);
      if (cop_mode_) {
        out.push_back(cop_mix(fg, attention(qs, src[h].k, src[h].v), *ms));
      } else {
        Matrix bg =
            masked_style_attention(qt, qs, kr, vr, *ms_bg, *mr_bg, omega_, renormalize_);
        out.push_back(background_mix(fg, bg, *ms));
      }
    }
    return out;
  }

 private:
  static const BranchFeatures& lookup(const SiteFeatures& f, const AttentionSite& site,
                                      const char* branch) {
    auto it = f.find(site.index);
    if (it == f.end())
      throw ArgumentError(std::string("no ") + branch + " features harvested for site " +
                          std::to_string(site.index));
    return it->second;
  }

  std::set<int> sites_;
  const SiteFeatures* source_;
  const SiteFeatures* reference_;
  double omega_;
  SacMasks masks_;
  bool cop_mode_;
  bool renormalize_;
  Observer observer_;
  int calls_ = 0;
};

// ---------------------------------------------------------------------------
// Debug snapshots

namespace detail {

inline Image grid_image(const std::vector<double>& values, int h, int w) {
  double lo = values.empty() ? 0.0 : values.front(), hi = lo;
  for (double v : values) {
    lo = std::min(lo, v);
    hi = std::max(hi, v);
  }
  Image img(w, h, 1);
  const double span = hi > lo ? hi - lo : 1.0;
  for (int i = 0; i < h * w; ++i)
    img.at(0, i / w, i % w) = (values[static_cast<std::size_t>(i)] - lo) / span;
  return img;
}

// Query norm map of the target branch and the attention of its center query
// over the reference keys, head-averaged.
inline std::vector<std::filesystem::path> write_snapshots(const std::filesystem::path& dir,
                                                          int t, const AttentionSite& site,
                                                          const BranchFeatures& target,
                                                          const BranchFeatures& reference) {
  std::filesystem::create_directories(dir);
  const int len = site.spatial_len();
  std::vector<double> qnorm(static_cast<std::size_t>(len), 0.0);
  std::vector<double> attn(static_cast<std::size_t>(len), 0.0);
  const int center = (site.height / 2) * site.width + site.width / 2;
  for (std::size_t h = 0; h < target.size(); ++h) {
    for (int i = 0; i < len; ++i) qnorm[static_cast<std::size_t>(i)] += target[h].q.row(i).squaredNorm();
    const Matrix q = target[h].q.row(center);
    const Matrix a = attention_weights(q, reference[h].k);
    for (int j = 0; j < len; ++j)
      attn[static_cast<std::size_t>(j)] += a(0, j) / static_cast<double>(target.size());
  }
  for (double& v : qnorm) v = std::sqrt(v);
  char stem[64];
  std::snprintf(stem, sizeof stem, "t%03d_site%02d", t, site.index);
  const auto qpath = dir / (std::string(stem) + "_query.png");
  const auto apath = dir / (std::string(stem) + "_attn.png");
  write_png(qpath, grid_image(qnorm, site.height, site.width));
  write_png(apath, grid_image(attn, site.height, site.width));
  return {qpath, apath};
}

inline Mask resize_mask_like(const Mask& m, int width, int height) {
  if (m.width == width && m.height == height) return m;
  return mask_from_image(center_crop_resize(mask_to_image(m), width, height), 0.5);
}

inline Image match_channels(const Image& img, int channels) {
  if (img.channels() == channels) return img;
  if (channels == 1) return to_gray(img);
  if (channels == 3) return to_rgb(img);
  throw ArgumentError("cannot convert a " + std::to_string(img.channels()) +
                      "-channel image to " + std::to_string(channels) + " channels");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Stylization

inline StylizeResult stylize(const StylizeRequest& req, const DenoiserBackend& backend,
                             const LatentCodec& codec) {
  const auto started = std::chrono::steady_clock::now();
  const ControlConfig& cfg = req.cfg;
  cfg.validate();
  if (req.source.empty()) throw ArgumentError("source image is empty");
  if (req.reference.empty()) throw ArgumentError("reference image is empty");

  const int width = req.source.width(), height = req.source.height();
  const int channels = codec.image_channels(backend.latent_channels());
  const Image source = detail::match_channels(req.source, channels);
  const bool resize_ref = req.reference.width() != width || req.reference.height() != height;
  Image reference = detail::match_channels(req.reference, channels);
  if (resize_ref) reference = center_crop_resize(reference, width, height);

  // Masks are validated and resampled before any denoising.
  const auto sites = backend.list_attention_sites();
  const auto gated = cfg.layer_gate.resolve(sites);
  const std::set<int> gate(gated.begin(), gated.end());
  std::optional<MaskPyramid> src_pyr, ref_pyr;
  if (req.reference_mask && !req.source_mask)
    throw ArgumentError("a reference mask needs a source mask");
  if (req.source_mask) {
    const Mask& ms = *req.source_mask;
    if (ms.width != width || ms.height != height)
      throw ArgumentError("source mask is " + std::to_string(ms.width) + "x" +
                          std::to_string(ms.height) + ", image is " + std::to_string(width) +
                          "x" + std::to_string(height));
    Mask mr = ms;
    if (req.reference_mask) {
      const Mask& given = *req.reference_mask;
      if (given.width != req.reference.width() || given.height != req.reference.height())
        throw ArgumentError("reference mask does not match the reference image resolution");
      mr = detail::resize_mask_like(given, width, height);
    }
    src_pyr = build_pyramid(ms, sites);
    ref_pyr = build_pyramid(mr, sites);
  }

  const NoiseSchedule sched = build_schedule(cfg.steps, cfg.schedule);
  Conditioning cond = backend.encode_prompt(cfg.prompt);
  cond.guidance_scale = cfg.guidance_scale;

  const LatentTrajectory src_traj = ddim_encode(source, backend, codec, cfg);
  const LatentTrajectory ref_traj = ddim_encode(reference, backend, codec, cfg);

  StylizeResult result;
  LatentCode z = src_traj.at(sched.steps());
  const SacMasks masks{src_pyr ? &*src_pyr : nullptr,
                       ref_pyr ? &*ref_pyr : nullptr};
  for (int t = sched.steps(); t >= 1; --t) {
    const int level = sched.train_timestep(t);
    const SiteFeatures src_f = harvest_features(backend, src_traj.at(t).data, level, cond, gate);
    const SiteFeatures ref_f = harvest_features(backend, ref_traj.at(t).data, level, cond, gate);
    StyleAttentionController ctl(gate, &src_f, &ref_f, effective_omega(t, cfg), masks,
                                 req.cop_mode, cfg.renormalize_masked_rows);
    if (req.debug_dir)
      ctl.set_observer([&, t](const AttentionSite& site, const BranchFeatures& tf,
                              const BranchFeatures& rf) {
        auto files = detail::write_snapshots(*req.debug_dir, t, site, tf, rf);
        result.debug_files.insert(result.debug_files.end(), files.begin(), files.end());
      });
    Tensor eps;
    try {
      eps = guided_noise(backend, z.data, level, cond, gate.empty() ? nullptr : &ctl);
    } catch (const StepError&) {
      throw;
    } catch (const std::exception& e) {
      throw PipelineError(e.what(), t);
    }
    z = ddim_step(z, eps, t, sched);
    if (!z.data.all_finite()) throw PipelineError("latent is not finite", t);
    if (req.on_progress) req.on_progress(sched.steps() - t + 1, sched.steps());
  }

  result.output = codec.decode(z.data);
  for (double& v : result.output.planes.data) v = std::clamp(v, 0.0, 1.0);
  if (req.keep_trajectories) {
    result.source_trajectory = src_traj;
    result.reference_trajectory = ref_traj;
  }
  result.wall_time =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - started).count();
  return result;
}

// Runs stylize at the backend's native resolution: the source (and its
// masks) are resized to fit, and the output is resized back. A request that
// already fits is passed through untouched.
inline StylizeResult stylize_fitted(StylizeRequest req, const DenoiserBackend& backend,
                                    const LatentCodec& codec) {
  const int f = codec.downsample_factor();
  const int w = backend.latent_width() * f, h = backend.latent_height() * f;
  const int ow = req.source.width(), oh = req.source.height();
  if (ow == w && oh == h) return stylize(req, backend, codec);
  if (req.source_mask && (req.source_mask->width != ow || req.source_mask->height != oh))
    throw ArgumentError("source mask does not match the source image resolution");
  req.source = resize_bilinear(req.source, w, h);
  if (req.source_mask) req.source_mask = resize_mask_nearest(*req.source_mask, w, h);
  StylizeResult r = stylize(req, backend, codec);
  r.output = resize_bilinear(r.output, ow, oh);
  return r;
}

// One entry of a multi-reference run.
struct ReferenceStep {
  Image reference;
  std::optional<Mask> mask;
  ControlConfig cfg;
  std::optional<Mask> reference_mask;
};

// Each output becomes the next source; masked steps keep the previous
// result outside their mask. Intermediate outputs pass through 8 bits, as
// they do when a chain session stores them.
inline Image multi_reference_stylize(std::span<const ReferenceStep> steps, const Image& source,
                                     const DenoiserBackend& backend, const LatentCodec& codec) {
  if (steps.empty()) throw ArgumentError("multi-reference stylization needs at least one step");
  for (std::size_t i = 1; i < steps.size(); ++i)
    if (!steps[i].mask)
      throw ArgumentError("step " + std::to_string(i) + " has no mask; only the first may omit it");
  Image current = source;
  for (std::size_t i = 0; i < steps.size(); ++i) {
    const ReferenceStep& s = steps[i];
    StylizeRequest req;
    req.source = current;
    req.reference = s.reference;
    req.cfg = s.cfg;
    req.source_mask = s.mask;
    req.reference_mask = s.reference_mask;
    req.cop_mode = true;
    current = stylize_fitted(req, backend, codec).output;
    if (i + 1 < steps.size()) current = quantize8(current);
  }
  return current;
}

}  // namespace stylectl
