// SPDX-License-Identifier: Apache-2.0
//
// Finite-difference checks of every differentiable kernel and of the full
// encoder -> projector -> language-model graph, in double precision.

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "mvl/tensor.hpp"

namespace mvl {

struct GradcheckConfig {
  double kernel_threshold = 1e-4;
  double end_to_end_threshold = 1e-3;
  double step = 1e-5;
  std::uint64_t seed = 0;
  // Coordinates probed per tensor in the end-to-end check; 0 probes all.
  std::size_t max_coordinates = 0;
  // Name of a kernel to replace with a deliberately wrong backward ("" for none).
  std::string inject_bug;
};

struct GradcheckResult {
  std::string name;
  double error = 0.0;
  double threshold = 0.0;
  bool passed = false;
};

/// max |analytic - numeric| / max(max |numeric|, 1e-8).
double gradcheck_error(std::span<const double> analytic, std::span<const double> numeric);

/// Central-difference gradient of `f` with respect to every element of every
/// input, compared against backward(). Inputs must require grad.
double check_gradient(const std::function<Tensor<double>(std::span<const Tensor<double>>)>& f,
                      std::vector<Tensor<double>> inputs, double step);

std::vector<std::string> gradcheck_kernel_names();
/// Names accepted by GradcheckConfig::inject_bug.
std::vector<std::string> injectable_bugs();

/// Kernel checks in gradcheck_kernel_names() order, then one line per
/// parameter group of the end-to-end model. An injected bug adds a line for
/// the broken kernel.
std::vector<GradcheckResult> run_gradcheck(const GradcheckConfig& config);

}  // namespace mvl
