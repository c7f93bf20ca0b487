// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "mvl/layers.hpp"

namespace mvl {

enum class ProjectorVariant { kLinear, kMlp2 };

std::string_view to_string(ProjectorVariant variant);
ProjectorVariant parse_projector_variant(std::string_view name);

struct ProjectorConfig {
  ProjectorVariant variant = ProjectorVariant::kMlp2;
  std::size_t d_vision = 64;
  std::size_t d_model = 64;

  /// linear: dv*dm + dm; mlp2 adds a dm x dm hidden layer (dm^2 + dm).
  std::size_t parameter_count() const;

  bool operator==(const ProjectorConfig&) const = default;
};

/// Maps vision-tower rows into the language model's embedding space, row by row.
template <typename T>
class Projector {
 public:
  static Projector init(const ProjectorConfig& config, Rng& rng);
  /// Builds a projector from explicit weights; second layer empty for linear.
  static Projector from_weights(const ProjectorConfig& config, Linear<T> first, std::optional<Linear<T>> second);

  /// linear: xW + b;  mlp2: gelu(xW1 + b1)W2 + b2.
  Tensor<T> project(const Tensor<T>& visual) const;

  const ProjectorConfig& config() const { return config_; }
  void collect(const std::string& prefix, std::vector<NamedParam<T>>& out) const;

 private:
  ProjectorConfig config_;
  Linear<T> first_;
  std::optional<Linear<T>> second_;
};

}  // namespace mvl
