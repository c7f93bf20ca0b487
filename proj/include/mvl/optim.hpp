// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mvl/tensor.hpp"

namespace mvl {

template <typename T>
struct NamedParam {
  std::string name;
  Tensor<T> tensor;
};

/// Linear warmup to `peak_lr`, then cosine decay to `min_lr` at `total_steps`.
struct LrSchedule {
  double peak_lr = 1e-3;
  double min_lr = 0.0;
  std::size_t warmup_steps = 0;
  std::size_t total_steps = 1;

  /// Throws a config error unless 0 <= min_lr <= peak_lr and warmup < total.
  void validate() const;
};

/// Schedule whose warmup is floor(warmup_ratio * total_steps), kept below total.
LrSchedule make_schedule(double peak_lr, double min_lr, std::size_t total_steps, double warmup_ratio);

/// Learning rate at `step`; steps past `total_steps` clamp to `min_lr`.
double cosine_lr(const LrSchedule& schedule, std::size_t step);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Decoupled weight decay; off unless configured.
  double weight_decay = 0.0;
  // Global-norm gradient clipping; <= 0 disables it.
  double clip_norm = 0.0;
};

template <typename T>
struct AdamState {
  std::string name;
  std::uint64_t step_count = 0;
  std::vector<T> m;
  std::vector<T> v;
};

template <typename T>
std::vector<AdamState<T>> make_adam_states(std::span<const NamedParam<T>> params);

/// One bias-corrected Adam update on every parameter, in place. Grads are left
/// untouched. Throws a contract error naming the first parameter without a grad.
template <typename T>
void adam_step(std::span<NamedParam<T>> params, std::span<AdamState<T>> states, double lr,
               const AdamConfig& config = {});

}  // namespace mvl
