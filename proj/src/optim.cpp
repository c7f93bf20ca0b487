// SPDX-License-Identifier: Apache-2.0

#include "mvl/optim.hpp"

#include <cmath>
#include <numbers>

#include <fmt/format.h>

#include "mvl/errors.hpp"

namespace mvl {

void LrSchedule::validate() const {
  if (!(min_lr >= 0.0 && min_lr <= peak_lr)) {
    throw Error(ErrorKind::kConfig, fmt::format("schedule needs 0 <= min_lr ({}) <= peak_lr ({})", min_lr, peak_lr));
  }
  if (total_steps == 0 || warmup_steps >= total_steps) {
    throw Error(ErrorKind::kConfig,
                fmt::format("schedule needs warmup_steps ({}) < total_steps ({})", warmup_steps, total_steps));
  }
}

LrSchedule make_schedule(double peak_lr, double min_lr, std::size_t total_steps, double warmup_ratio) {
  if (warmup_ratio < 0.0 || warmup_ratio >= 1.0) {
    throw Error(ErrorKind::kConfig, fmt::format("warmup ratio {} outside [0, 1)", warmup_ratio));
  }
  LrSchedule schedule;
  schedule.peak_lr = peak_lr;
  schedule.min_lr = min_lr;
  schedule.total_steps = total_steps == 0 ? 1 : total_steps;
  schedule.warmup_steps = static_cast<std::size_t>(std::floor(warmup_ratio * static_cast<double>(total_steps)));
  if (schedule.warmup_steps >= schedule.total_steps) schedule.warmup_steps = schedule.total_steps - 1;
  schedule.validate();
  return schedule;
}

double cosine_lr(const LrSchedule& schedule, std::size_t step) {
  if (step >= schedule.total_steps) return schedule.min_lr;
  if (step < schedule.warmup_steps) {
    return schedule.peak_lr * static_cast<double>(step) / static_cast<double>(schedule.warmup_steps);
  }
  const double progress = static_cast<double>(step - schedule.warmup_steps) /
                          static_cast<double>(schedule.total_steps - schedule.warmup_steps);
  return schedule.min_lr +
         0.5 * (schedule.peak_lr - schedule.min_lr) * (1.0 + std::cos(std::numbers::pi * progress));
}

template <typename T>
std::vector<AdamState<T>> make_adam_states(std::span<const NamedParam<T>> params) {
  std::vector<AdamState<T>> states;
  states.reserve(params.size());
  for (const auto& p : params) {
    AdamState<T> s;
    s.name = p.name;
    s.m.assign(p.tensor.numel(), T{0});
    s.v.assign(p.tensor.numel(), T{0});
    states.push_back(std::move(s));
  }
  return states;
}

template <typename T>
void adam_step(std::span<NamedParam<T>> params, std::span<AdamState<T>> states, double lr,
               const AdamConfig& config) {
  if (params.size() != states.size()) {
    throw Error(ErrorKind::kContract,
                fmt::format("adam_step: {} params but {} optimizer states", params.size(), states.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].tensor.has_grad()) {
      throw Error(ErrorKind::kContract, fmt::format("adam_step: parameter '{}' has no grad", params[i].name));
    }
    if (states[i].m.size() != params[i].tensor.numel()) {
      throw Error(ErrorKind::kContract, fmt::format("adam_step: state for '{}' has wrong size", params[i].name));
    }
  }

  double clip_factor = 1.0;
  if (config.clip_norm > 0.0) {
    double sq = 0.0;
    for (const auto& p : params)
      for (T g : p.tensor.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
    const double norm = std::sqrt(sq);
    if (norm > config.clip_norm) clip_factor = config.clip_norm / norm;
  }

  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& state = states[i];
    state.step_count += 1;
    const double t = static_cast<double>(state.step_count);
    const double correction1 = 1.0 - std::pow(config.beta1, t);
    const double correction2 = 1.0 - std::pow(config.beta2, t);
    auto values = params[i].tensor.mutable_data();
    const auto grads = params[i].tensor.grad();
    for (std::size_t j = 0; j < values.size(); ++j) {
      const double g = static_cast<double>(grads[j]) * clip_factor;
      const double m = config.beta1 * static_cast<double>(state.m[j]) + (1.0 - config.beta1) * g;
      const double v = config.beta2 * static_cast<double>(state.v[j]) + (1.0 - config.beta2) * g * g;
      state.m[j] = static_cast<T>(m);
      state.v[j] = static_cast<T>(v);
      const double m_hat = m / correction1;
      const double v_hat = v / correction2;
      double p = static_cast<double>(values[j]);
      if (config.weight_decay > 0.0) p -= lr * config.weight_decay * p;
      p -= lr * m_hat / (std::sqrt(v_hat) + config.eps);
      values[j] = static_cast<T>(p);
    }
  }
}

template std::vector<AdamState<float>> make_adam_states(std::span<const NamedParam<float>>);
template std::vector<AdamState<double>> make_adam_states(std::span<const NamedParam<double>>);
template void adam_step(std::span<NamedParam<float>>, std::span<AdamState<float>>, double, const AdamConfig&);
template void adam_step(std::span<NamedParam<double>>, std::span<AdamState<double>>, double, const AdamConfig&);

}  // namespace mvl
