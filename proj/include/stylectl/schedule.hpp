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
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "stylectl/errors.hpp"
#include "stylectl/tensor.hpp"

namespace stylectl {

enum class SchedulePreset { ScaledLinear, Linear, Cosine };

inline SchedulePreset parse_schedule_preset(std::string_view name) {
  if (name == "scaled-linear" || name == "scaled_linear")
    return SchedulePreset::ScaledLinear;
  if (name == "linear") return SchedulePreset::Linear;
  if (name == "cosine" || name == "squaredcos_cap_v2") return SchedulePreset::Cosine;
  throw ConfigurationError("unknown schedule preset '" + std::string(name) +
                           "' (known: scaled-linear, linear, cosine)");
}

inline std::string_view preset_name(SchedulePreset p) {
  switch (p) {
    case SchedulePreset::ScaledLinear:
      return "scaled-linear";
    case SchedulePreset::Linear:
      return "linear";
    case SchedulePreset::Cosine:
      return "cosine";
  }
  return "scaled-linear";
}

// Training-level parameters of the beta schedule that inference steps are
// subsampled from. Defaults follow the latent-diffusion family.
struct ScheduleOptions {
  int train_steps = 1000;
  double beta_start = 0.00085;
  double beta_end = 0.012;
};

// Floor applied to alpha_bar before square roots.
inline constexpr double kAlphaBarFloor = 1e-8;

// Cumulative signal levels alpha_bar[t] for inference indices t = 0..T.
// Index 0 is the clean latent. Immutable after construction.
class NoiseSchedule {
 public:
  // Validates: alpha_bar[0] == 1, strictly decreasing, values in (0, 1].
  // The terminal-noise condition (alpha_bar[T] < 0.01) is only enforced when
  // require_terminal_noise is set, so tests can build tiny hand schedules.
  static NoiseSchedule from_alphas_bar(std::vector<double> alphas_bar,
                                       std::vector<int> train_timesteps = {},
                                       bool require_terminal_noise = false) {
    if (alphas_bar.size() < 2) throw ArgumentError("schedule needs T >= 1");
    if (alphas_bar.front() != 1.0)
      throw ArgumentError("schedule must start at alpha_bar = 1");
    for (std::size_t i = 1; i < alphas_bar.size(); ++i) {
      if (!(alphas_bar[i] < alphas_bar[i - 1]) || alphas_bar[i] < 0.0)
        throw ArgumentError("schedule must be strictly decreasing and >= 0");
    }
    if (require_terminal_noise && !(alphas_bar.back() < 0.01))
      throw ConfigurationError("terminal alpha_bar must be below 0.01");
    if (train_timesteps.empty()) {
      train_timesteps.resize(alphas_bar.size());
      for (std::size_t i = 0; i < alphas_bar.size(); ++i)
        train_timesteps[i] = static_cast<int>(i);
    }
    if (train_timesteps.size() != alphas_bar.size())
      throw ArgumentError("timestep table length mismatch");
    NoiseSchedule s;
    s.alphas_bar_ = std::move(alphas_bar);
    s.train_timesteps_ = std::move(train_timesteps);
    return s;
  }

  int steps() const noexcept { return static_cast<int>(alphas_bar_.size()) - 1; }
  double alpha_bar(int t) const {
    check_index(t);
    return alphas_bar_[static_cast<std::size_t>(t)];
  }
  // Training level the denoiser is conditioned on at inference index t.
  int train_timestep(int t) const {
    check_index(t);
    return train_timesteps_[static_cast<std::size_t>(t)];
  }
  std::span<const double> alphas_bar() const noexcept { return alphas_bar_; }

  friend bool operator==(const NoiseSchedule&, const NoiseSchedule&) = default;

 private:
  NoiseSchedule() = default;
  void check_index(int t) const {
    if (t < 0 || t > steps())
      throw ArgumentError("timestep " + std::to_string(t) + " outside [0, " +
                          std::to_string(steps()) + "]");
  }

  std::vector<double> alphas_bar_;
  std::vector<int> train_timesteps_;
};

// alpha_bar at every training level n = 0..N (n = 0 is 1).
inline std::vector<double> training_alphas_bar(SchedulePreset preset,
                                               const ScheduleOptions& opt = {}) {
  const int n = opt.train_steps;
  if (n < 1) throw ArgumentError("train_steps must be >= 1");
  std::vector<double> betas(static_cast<std::size_t>(n));
  switch (preset) {
    case SchedulePreset::ScaledLinear: {
      const double a = std::sqrt(opt.beta_start), b = std::sqrt(opt.beta_end);
      for (int i = 0; i < n; ++i) {
        const double r = n == 1 ? 0.0 : static_cast<double>(i) / (n - 1);
        const double s = a + (b - a) * r;
        betas[static_cast<std::size_t>(i)] = s * s;
      }
      break;
    }
    case SchedulePreset::Linear: {
      const double a = 1e-4, b = 0.02;
      for (int i = 0; i < n; ++i) {
        const double r = n == 1 ? 0.0 : static_cast<double>(i) / (n - 1);
        betas[static_cast<std::size_t>(i)] = a + (b - a) * r;
      }
      break;
    }
    case SchedulePreset::Cosine: {
      constexpr double s = 0.008;
      auto f = [&](double t) {
        const double c = std::cos((t / n + s) / (1 + s) * std::numbers::pi / 2);
        return c * c;
      };
      for (int i = 0; i < n; ++i)
        betas[static_cast<std::size_t>(i)] =
            std::min(1.0 - f(i + 1.0) / f(static_cast<double>(i)), 0.999);
      break;
    }
  }
  std::vector<double> out(static_cast<std::size_t>(n) + 1);
  out[0] = 1.0;
  for (int i = 1; i <= n; ++i)
    out[static_cast<std::size_t>(i)] =
        out[static_cast<std::size_t>(i) - 1] * (1.0 - betas[static_cast<std::size_t>(i) - 1]);
  return out;
}

// T inference steps subsampled uniformly from the training levels:
// inference index i maps to training level floor(i * N / T).
inline NoiseSchedule build_schedule(int steps, SchedulePreset preset,
                                    const ScheduleOptions& opt = {}) {
  if (steps < 1) throw ArgumentError("schedule step count must be >= 1");
  if (steps > opt.train_steps)
    throw ArgumentError("schedule step count exceeds training levels");
  const auto levels = training_alphas_bar(preset, opt);
  std::vector<double> ab(static_cast<std::size_t>(steps) + 1);
  std::vector<int> ts(ab.size());
  for (int i = 0; i <= steps; ++i) {
    const int n = static_cast<int>(static_cast<long long>(i) * opt.train_steps / steps);
    ts[static_cast<std::size_t>(i)] = n;
    ab[static_cast<std::size_t>(i)] = levels[static_cast<std::size_t>(n)];
  }
  return NoiseSchedule::from_alphas_bar(std::move(ab), std::move(ts), true);
}

inline NoiseSchedule build_schedule(int steps, std::string_view preset,
                                    const ScheduleOptions& opt = {}) {
  return build_schedule(steps, parse_schedule_preset(preset), opt);
}

// A latent code at inference noise level t.
struct LatentCode {
  Tensor data;
  int t = 0;

  friend bool operator==(const LatentCode&, const LatentCode&) = default;
};

// Cached codes for t = 0..T of one branch.
struct LatentTrajectory {
  std::vector<LatentCode> codes;

  int steps() const noexcept { return static_cast<int>(codes.size()) - 1; }
  const LatentCode& at(int t) const { return codes.at(static_cast<std::size_t>(t)); }

  friend bool operator==(const LatentTrajectory&, const LatentTrajectory&) = default;
};

namespace detail {

inline double safe_sqrt_alpha(double a) { return std::sqrt(std::max(a, kAlphaBarFloor)); }

inline double safe_sqrt_one_minus(double a) {
  return std::sqrt(std::max(1.0 - a, 0.0));
}

// Deterministic DDIM move between two signal levels with a fixed noise
// estimate: z_to = sqrt(a_to) * z0_hat + sqrt(1 - a_to) * eps.
inline Tensor ddim_transition(const Tensor& z, const Tensor& eps, double a_from,
                              double a_to) {
  require_same_shape(z, eps, "ddim transition");
  const double sf = safe_sqrt_alpha(a_from);
  const double nf = safe_sqrt_one_minus(a_from);
  const double st = safe_sqrt_alpha(a_to);
  const double nt = safe_sqrt_one_minus(a_to);
  Tensor out(z.channels, z.height, z.width);
  for (std::size_t i = 0; i < z.size(); ++i) {
    const double z0 = (z.data[i] - nf * eps.data[i]) / sf;
    out.data[i] = st * z0 + nt * eps.data[i];
  }
  return out;
}

}  // namespace detail

// Forward noising: z_t = sqrt(abar_t) z_0 + sqrt(1 - abar_t) eps, with the
// same alpha_bar floor as the inverse direction.
inline LatentCode add_noise(const LatentCode& z0, int t, const Tensor& eps,
                            const NoiseSchedule& sched) {
  require_same_shape(z0.data, eps, "add_noise");
  const double a = sched.alpha_bar(t);
  const double s = detail::safe_sqrt_alpha(a);
  const double n = detail::safe_sqrt_one_minus(a);
  LatentCode out{Tensor(z0.data.channels, z0.data.height, z0.data.width), t};
  for (std::size_t i = 0; i < eps.size(); ++i)
    out.data.data[i] = s * z0.data.data[i] + n * eps.data[i];
  return out;
}

// Clean-latent estimate from z_t and a noise prediction.
inline LatentCode predict_z0(const LatentCode& z_t, const Tensor& eps_pred, int t,
                             const NoiseSchedule& sched) {
  if (t < 1) throw ArgumentError("predict_z0 requires t >= 1");
  require_same_shape(z_t.data, eps_pred, "predict_z0");
  const double a = sched.alpha_bar(t);
  if (a <= 0.0)
    throw NumericalDomainError("alpha_bar at t=" + std::to_string(t) + " is zero");
  const double s = detail::safe_sqrt_alpha(a);
  const double n = detail::safe_sqrt_one_minus(a);
  LatentCode out{Tensor(z_t.data.channels, z_t.data.height, z_t.data.width), 0};
  for (std::size_t i = 0; i < eps_pred.size(); ++i)
    out.data.data[i] = (z_t.data.data[i] - n * eps_pred.data[i]) / s;
  return out;
}

// One deterministic DDIM sampling step t -> t-1.
inline LatentCode ddim_step(const LatentCode& z_t, const Tensor& eps_pred, int t,
                            const NoiseSchedule& sched) {
  if (t < 1 || t > sched.steps())
    throw ArgumentError("ddim_step: t=" + std::to_string(t) + " outside [1, " +
                        std::to_string(sched.steps()) + "]");
  return {detail::ddim_transition(z_t.data, eps_pred, sched.alpha_bar(t),
                                  sched.alpha_bar(t - 1)),
          t - 1};
}

// One inversion step t -> t+1 using the noise predicted at z_t.
inline LatentCode ddim_inverse_step(const LatentCode& z_t, const Tensor& eps_pred,
                                    int t, const NoiseSchedule& sched) {
  if (t < 0 || t >= sched.steps())
    throw ArgumentError("ddim_inverse_step: t=" + std::to_string(t) +
                        " outside [0, " + std::to_string(sched.steps() - 1) + "]");
  return {detail::ddim_transition(z_t.data, eps_pred, sched.alpha_bar(t),
                                  sched.alpha_bar(t + 1)),
          t + 1};
}

}  // namespace stylectl
