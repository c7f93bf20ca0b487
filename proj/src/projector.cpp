// SPDX-License-Identifier: Apache-2.0

#include "mvl/projector.hpp"

#include <fmt/format.h>

#include "mvl/errors.hpp"

namespace mvl {

std::string_view to_string(ProjectorVariant variant) {
  return variant == ProjectorVariant::kLinear ? "linear" : "mlp2";
}

ProjectorVariant parse_projector_variant(std::string_view name) {
  if (name == "linear") return ProjectorVariant::kLinear;
  if (name == "mlp2") return ProjectorVariant::kMlp2;
  throw Error(ErrorKind::kConfig, fmt::format("unknown projector variant '{}' (linear | mlp2)", name));
}

std::size_t ProjectorConfig::parameter_count() const {
  const std::size_t first = d_vision * d_model + d_model;
  return variant == ProjectorVariant::kLinear ? first : first + d_model * d_model + d_model;
}

template <typename T>
Projector<T> Projector<T>::init(const ProjectorConfig& config, Rng& rng) {
  Projector p;
  p.config_ = config;
  p.first_ = Linear<T>::init(config.d_vision, config.d_model, rng);
  if (config.variant == ProjectorVariant::kMlp2) p.second_ = Linear<T>::init(config.d_model, config.d_model, rng);
  return p;
}

template <typename T>
Projector<T> Projector<T>::from_weights(const ProjectorConfig& config, Linear<T> first,
                                        std::optional<Linear<T>> second) {
  const bool want_second = config.variant == ProjectorVariant::kMlp2;
  if (first.weight.shape() != Shape{config.d_vision, config.d_model} || first.bias.shape() != Shape{config.d_model} ||
      want_second != second.has_value() ||
      (second && (second->weight.shape() != Shape{config.d_model, config.d_model} ||
                  second->bias.shape() != Shape{config.d_model}))) {
    throw Error(ErrorKind::kShape, "projector weights do not match the projector config");
  }
  Projector p;
  p.config_ = config;
  p.first_ = std::move(first);
  p.second_ = std::move(second);
  return p;
}

template <typename T>
Tensor<T> Projector<T>::project(const Tensor<T>& visual) const {
  if (visual.rank() != 2 || visual.cols() != config_.d_vision || visual.rows() == 0) {
    throw Error(ErrorKind::kShape, fmt::format("projector expects [N x {}] with N >= 1, got {}", config_.d_vision,
                                               shape_string(visual.shape())));
  }
  auto h = first_(visual);
  if (!second_) return h;
  return (*second_)(gelu(h));
}

template <typename T>
void Projector<T>::collect(const std::string& prefix, std::vector<NamedParam<T>>& out) const {
  first_.collect(prefix + ".fc1", out);
  if (second_) second_->collect(prefix + ".fc2", out);
}

template class Projector<float>;
template class Projector<double>;

}  // namespace mvl
