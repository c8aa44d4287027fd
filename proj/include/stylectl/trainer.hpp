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

// Noise-prediction training for the toy backend:
// minimize E_{t, z0, eps} || eps - eps_theta(z_t, t) ||^2.

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "stylectl/backend.hpp"
#include "stylectl/image.hpp"
#include "stylectl/schedule.hpp"
#include "stylectl/toy_unet.hpp"

namespace stylectl {

struct AdamState {
  std::vector<Matrix> m;
  std::vector<Matrix> v;
  std::int64_t updates = 0;

  friend bool operator==(const AdamState&, const AdamState&) = default;
};

// Everything needed to continue a run where it stopped.
struct TrainState {
  int step = 0;
  AdamState adam;
};

struct TrainOptions {
  int steps = 2000;
  int batch = 4;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double adam_eps = 1e-8;
  double grad_clip = 1.0;  // global L2 norm; <= 0 disables
  std::uint64_t seed = 0;
  std::string schedule = "scaled-linear";
  std::string prompt = "head";
  int smoothing_window = 50;
  std::function<void(int step, double loss)> on_step;
};

struct TrainResult {
  std::vector<double> losses;  // mean batch loss per step
  double initial_smoothed = 0.0;
  double final_smoothed = 0.0;
};

// Mean of the first / last `window` entries.
inline double head_mean(std::span<const double> xs, int window) {
  const std::size_t n = std::min<std::size_t>(xs.size(), static_cast<std::size_t>(window));
  if (n == 0) return 0.0;
  double s = 0.0;
  for (std::size_t i = 0; i < n; ++i) s += xs[i];
  return s / static_cast<double>(n);
}
inline double tail_mean(std::span<const double> xs, int window) {
  const std::size_t n = std::min<std::size_t>(xs.size(), static_cast<std::size_t>(window));
  if (n == 0) return 0.0;
  double s = 0.0;
  for (std::size_t i = xs.size() - n; i < xs.size(); ++i) s += xs[i];
  return s / static_cast<double>(n);
}

// Denoising objective for one sample at training level `timestep`.
inline double denoising_loss(const DenoiserBackend& backend, const Tensor& z0, int timestep,
                             const Tensor& eps, const Conditioning& cond,
                             SchedulePreset preset = SchedulePreset::ScaledLinear) {
  require_same_shape(z0, eps, "denoising_loss");
  const auto levels = training_alphas_bar(preset);
  if (timestep < 0 || timestep >= static_cast<int>(levels.size()))
    throw ArgumentError("training level out of range");
  const double a = levels[static_cast<std::size_t>(timestep)];
  Tensor z(z0.channels, z0.height, z0.width);
  for (std::size_t i = 0; i < z.size(); ++i)
    z.data[i] = std::sqrt(a) * z0.data[i] + std::sqrt(1.0 - a) * eps.data[i];
  const Tensor pred = backend.predict_noise(z, timestep, cond);
  double acc = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = eps.data[i] - pred.data[i];
    acc += d * d;
  }
  return acc / static_cast<double>(pred.size());
}

inline TrainResult train_toy(ToyUNet& model, std::span<const Image> dataset,
                             const TrainOptions& opt, TrainState* state = nullptr) {
  if (dataset.empty()) throw ArgumentError("training dataset is empty");
  if (opt.steps < 1) throw ArgumentError("training steps must be >= 1");
  if (opt.batch < 1) throw ArgumentError("batch size must be >= 1");
  const auto& cfg = model.config();
  for (const auto& img : dataset)
    if (img.channels() != cfg.channels || img.width() != cfg.image_size ||
        img.height() != cfg.image_size)
      throw ArgumentError("dataset image does not match the backend resolution");
  const auto codec = model.codec();
  std::vector<Tensor> latents;
  latents.reserve(dataset.size());
  for (const auto& img : dataset) latents.push_back(codec->encode(img));

  const auto levels = training_alphas_bar(parse_schedule_preset(opt.schedule));
  const int n_levels = static_cast<int>(levels.size()) - 1;
  const Conditioning cond = model.encode_prompt(opt.prompt);
  auto& params = model.parameters();

  TrainState local;
  TrainState& st = state ? *state : local;
  if (st.adam.m.size() != params.size()) {
    st.adam.m.clear();
    st.adam.v.clear();
    for (const auto& p : params) {
      st.adam.m.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
      st.adam.v.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
    }
  }

  TrainResult result;
  result.losses.reserve(static_cast<std::size_t>(opt.steps));
  const std::size_t numel = latents.front().size();

  for (int local_step = 0; local_step < opt.steps; ++local_step) {
    const int step = st.step + 1;
    std::mt19937_64 rng(opt.seed * 0x9E3779B97F4A7C15ull + static_cast<std::uint64_t>(step));
    std::uniform_int_distribution<std::size_t> pick(0, dataset.size() - 1);
    std::uniform_int_distribution<int> level(1, n_levels);
    std::normal_distribution<double> normal(0.0, 1.0);

    for (auto& p : params) p.zero_grad();
    double batch_loss = 0.0;
    for (int b = 0; b < opt.batch; ++b) {
      const Tensor& z0 = latents[pick(rng)];
      const int t = level(rng);
      const double a = levels[static_cast<std::size_t>(t)];
      Tensor eps(z0.channels, z0.height, z0.width);
      for (double& e : eps.data) e = normal(rng);
      Tensor zt(z0.channels, z0.height, z0.width);
      for (std::size_t i = 0; i < numel; ++i)
        zt.data[i] = std::sqrt(a) * z0.data[i] + std::sqrt(1.0 - a) * eps.data[i];

      nn::Tape tape(true);
      const auto out = model.forward(tape, zt, t, cond);
      const Matrix& pred = tape.value(out);
      Matrix seed(pred.rows(), pred.cols());
      double loss = 0.0;
      for (Eigen::Index i = 0; i < pred.size(); ++i) {
        const double d = pred.data()[i] - eps.data[static_cast<std::size_t>(i)];
        loss += d * d;
        seed.data()[i] = 2.0 * d / (static_cast<double>(numel) * opt.batch);
      }
      batch_loss += loss / static_cast<double>(numel);
      tape.backward(out, seed);
    }
    batch_loss /= opt.batch;
    if (!std::isfinite(batch_loss)) throw TrainingError("loss is not finite", step);

    double norm2 = 0.0;
    for (const auto& p : params) norm2 += p.grad.squaredNorm();
    if (!std::isfinite(norm2)) throw TrainingError("gradient is not finite", step);
    const double clip =
        (opt.grad_clip > 0.0 && norm2 > opt.grad_clip * opt.grad_clip)
            ? opt.grad_clip / std::sqrt(norm2)
            : 1.0;

    st.adam.updates += 1;
    const double bc1 = 1.0 - std::pow(opt.beta1, static_cast<double>(st.adam.updates));
    const double bc2 = 1.0 - std::pow(opt.beta2, static_cast<double>(st.adam.updates));
    for (std::size_t i = 0; i < params.size(); ++i) {
      auto& p = params[i];
      Matrix& m = st.adam.m[i];
      Matrix& v = st.adam.v[i];
      const Matrix g = p.grad * clip;
      m = opt.beta1 * m + (1.0 - opt.beta1) * g;
      v = opt.beta2 * v + (1.0 - opt.beta2) * g.cwiseProduct(g);
      p.value.array() -= opt.learning_rate * (m.array() / bc1) /
                         ((v.array() / bc2).sqrt() + opt.adam_eps);
    }

    st.step = step;
    result.losses.push_back(batch_loss);
    if (opt.on_step) opt.on_step(step, batch_loss);
  }
  result.initial_smoothed = head_mean(result.losses, opt.smoothing_window);
  result.final_smoothed = tail_mean(result.losses, opt.smoothing_window);
  return result;
}

}  // namespace stylectl
