// SPDX-License-Identifier: Apache-2.0

#include "mvl/model.hpp"

#include <algorithm>

#include <fmt/format.h>

#include "mvl/errors.hpp"

namespace mvl {

void ModelConfig::validate() const {
  encoder.validate();
  lm.validate();
  if (lm.context_length < encoder.token_count() + 2) {
    throw Error(ErrorKind::kContextOverflow, fmt::format("context length {} cannot hold {} visual tokens plus BOS/EOS",
                                                lm.context_length, encoder.token_count()));
  }
}

std::string_view to_string(ParamGroup group) {
  switch (group) {
    case ParamGroup::kEncoder: return "encoder";
    case ParamGroup::kProjector: return "projector";
    case ParamGroup::kLm: return "lm";
  }
  return "";
}

template <typename T>
MultimodalModel<T> MultimodalModel<T>::init(const ModelConfig& config) {
  config.validate();
  MultimodalModel model;
  model.config_ = config;
  model.encoder_ = VisionEncoder<T>::init(config.encoder, derive_seed(config.seed, 1));
  Rng projector_rng(derive_seed(config.seed, 2));
  model.projector_ = Projector<T>::init(config.projector_config(), projector_rng);
  model.lm_ = LanguageModel<T>::init(config.lm, derive_seed(config.seed, 3));
  return model;
}

template <typename T>
std::vector<NamedParam<T>> MultimodalModel<T>::parameters(ParamGroup group) const {
  std::vector<NamedParam<T>> out;
  switch (group) {
    case ParamGroup::kEncoder: encoder_.collect("encoder", out); break;
    case ParamGroup::kProjector: projector_.collect("projector", out); break;
    case ParamGroup::kLm: lm_.collect("lm", out); break;
  }
  return out;
}

template <typename T>
std::vector<NamedParam<T>> MultimodalModel<T>::named_parameters() const {
  std::vector<NamedParam<T>> out;
  for (auto group : {ParamGroup::kEncoder, ParamGroup::kProjector, ParamGroup::kLm}) {
    auto part = parameters(group);
    std::move(part.begin(), part.end(), std::back_inserter(out));
  }
  return out;
}

template <typename T>
void MultimodalModel<T>::set_requires_grad(ParamGroup group, bool on) {
  for (auto& p : parameters(group)) p.tensor.set_requires_grad(on);
}

std::size_t assembled_length(const RenderedSample& rendered, std::size_t token_count) {
  return rendered.image_slot ? rendered.ids.size() - 1 + token_count : rendered.ids.size();
}

namespace {

void check_budget(const RenderedSample& rendered, const ModelConfig& config, bool has_image) {
  if (rendered.ids.size() != rendered.loss_mask.size()) {
    throw Error(ErrorKind::kSchema, "rendered sample has mismatched ids and loss mask");
  }
  if (has_image != rendered.image_slot.has_value()) {
    throw Error(ErrorKind::kSchema, has_image ? "image supplied for a sample without an image slot"
                                              : "sample has an image slot but no image");
  }
  const std::size_t length = assembled_length(rendered, config.encoder.token_count());
  if (length > config.lm.context_length) {
    throw Error(ErrorKind::kContextOverflow,
                fmt::format("assembled length {} ({} text + {} visual) exceeds context length {}", length,
                            rendered.ids.size() - (rendered.image_slot ? 1 : 0),
                            rendered.image_slot ? config.encoder.token_count() : 0, config.lm.context_length));
  }
}

}  // namespace

template <typename T>
AssembledSequence<T> assemble_features(const MultimodalModel<T>& model, const RenderedSample& rendered,
                                       const Tensor<T>* visual_features) {
  const auto& config = model.config();
  check_budget(rendered, config, visual_features != nullptr);

  AssembledSequence<T> out;
  if (!rendered.image_slot) {
    out.embeddings = model.lm().embed(rendered.ids);
    out.ids = rendered.ids;
    out.loss_mask = rendered.loss_mask;
    return out;
  }

  const std::size_t slot = *rendered.image_slot;
  const std::size_t count = config.encoder.token_count();
  if (visual_features->rank() != 2 || visual_features->rows() != count ||
      visual_features->cols() != config.encoder.d_vision) {
    throw Error(ErrorKind::kShape, fmt::format("visual features {} do not match encoder output [{}x{}]",
                                               shape_string(visual_features->shape()), count,
                                               config.encoder.d_vision));
  }
  const std::span<const TokenId> ids(rendered.ids);
  std::vector<Tensor<T>> parts;
  parts.push_back(model.lm().embed(ids.subspan(0, slot)));
  parts.push_back(model.projector().project(*visual_features));
  parts.push_back(model.lm().embed(ids.subspan(slot + 1)));
  out.embeddings = concat_rows<T>(parts);

  out.ids.assign(rendered.ids.begin(), rendered.ids.begin() + static_cast<std::ptrdiff_t>(slot));
  out.ids.insert(out.ids.end(), count, vocab::kImg);
  out.ids.insert(out.ids.end(), rendered.ids.begin() + static_cast<std::ptrdiff_t>(slot) + 1, rendered.ids.end());
  out.loss_mask.assign(rendered.loss_mask.begin(), rendered.loss_mask.begin() + static_cast<std::ptrdiff_t>(slot));
  out.loss_mask.insert(out.loss_mask.end(), count, std::uint8_t{0});
  out.loss_mask.insert(out.loss_mask.end(), rendered.loss_mask.begin() + static_cast<std::ptrdiff_t>(slot) + 1,
                       rendered.loss_mask.end());
  out.visual_begin = slot;
  out.visual_count = count;
  return out;
}

template <typename T>
AssembledSequence<T> assemble(const MultimodalModel<T>& model, const RenderedSample& rendered,
                              const ImageInput* image) {
  check_budget(rendered, model.config(), image != nullptr);
  if (!image) return assemble_features<T>(model, rendered, nullptr);
  const auto features = model.encoder().encode(*image);
  return assemble_features(model, rendered, &features);
}

template <typename T>
SampleForward<T> forward_sample(const MultimodalModel<T>& model, const PreparedSample& sample,
                                const Tensor<T>* cached_features) {
  const auto& rendered = sample.rendered;
  AssembledSequence<T> seq;
  if (rendered.image_slot && cached_features) {
    seq = assemble_features(model, rendered, cached_features);
  } else {
    seq = assemble(model, rendered, sample.image.get());
  }

  SampleForward<T> out;
  const std::size_t length = seq.ids.size();
  out.targets.assign(length, vocab::kPad);
  out.mask.assign(length, 0);
  bool any = false;
  for (std::size_t t = 0; t + 1 < length; ++t) {
    out.targets[t] = seq.ids[t + 1];
    out.mask[t] = seq.loss_mask[t + 1];
    any = any || out.mask[t] != 0;
  }
  if (!any) {
    throw Error(ErrorKind::kEmptySupervision, fmt::format("sample '{}' has no supervised positions", sample.id));
  }
  out.logits = model.lm().forward_logits(seq.embeddings);
  out.loss = cross_entropy_masked(out.logits, std::span<const TokenId>(out.targets),
                                  std::span<const std::uint8_t>(out.mask));
  return out;
}

template <typename T>
Tensor<T> compute_loss(const MultimodalModel<T>& model, std::span<const PreparedSample> samples,
                       std::span<const std::optional<Tensor<T>>> cached_features) {
  if (samples.empty()) throw Error(ErrorKind::kContract, "compute_loss on an empty batch");
  if (!cached_features.empty() && cached_features.size() != samples.size()) {
    throw Error(ErrorKind::kContract, "feature cache does not line up with the batch");
  }
  std::vector<Tensor<T>> losses;
  losses.reserve(samples.size());
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const Tensor<T>* cached = nullptr;
    if (!cached_features.empty() && cached_features[i]) cached = &*cached_features[i];
    auto loss = forward_sample(model, samples[i], cached).loss;
    losses.push_back(Tensor<T>::make_result({1, 1}, {loss.item()}, "reshape", {loss}, [](Node<T>& self) {
      self.parents[0]->ensure_grad()[0] += self.grad[0];
    }));
  }
  return mean(concat_rows<T>(losses));
}

template <typename T>
Tensor<T> encode_frozen(const MultimodalModel<T>& model, const ImageInput& image) {
  NoGradGuard no_grad;
  return model.encoder().encode(image);
}

template <typename T>
std::string answer(const MultimodalModel<T>& model, const ImageInput* image, std::string_view prompt,
                   std::size_t max_new, const RenderOptions& options) {
  if (prompt.empty()) throw Error(ErrorKind::kContract, "answer() needs a non-empty prompt");
  ConversationSample sample;
  sample.id = "prompt";
  if (image) sample.image = ImageRef::from_path("<inline>");
  // Same layout as the training conversations: the image leads its own line.
  std::string text(prompt);
  if (image && text.find(kImagePlaceholder) == std::string::npos) text = std::string(kImagePlaceholder) + "\n" + text;
  sample.turns.push_back({Role::kUser, std::move(text)});
  const auto rendered = render_conversation(sample, /*for_training=*/false, options);
  if (max_new == 0) {
    check_budget(rendered, model.config(), image != nullptr);
    return {};
  }
  NoGradGuard no_grad;
  const auto seq = assemble(model, rendered, image);
  const auto ids = model.lm().generate_greedy(seq.embeddings, max_new);
  return decode_text(ids);
}

#define MVL_INSTANTIATE_MODEL(T)                                                                               \
  template class MultimodalModel<T>;                                                                           \
  template AssembledSequence<T> assemble_features(const MultimodalModel<T>&, const RenderedSample&,            \
                                                  const Tensor<T>*);                                           \
  template AssembledSequence<T> assemble(const MultimodalModel<T>&, const RenderedSample&, const ImageInput*); \
  template SampleForward<T> forward_sample(const MultimodalModel<T>&, const PreparedSample&, const Tensor<T>*); \
  template Tensor<T> compute_loss(const MultimodalModel<T>&, std::span<const PreparedSample>,                  \
                                  std::span<const std::optional<Tensor<T>>>);                                  \
  template Tensor<T> encode_frozen(const MultimodalModel<T>&, const ImageInput&);                              \
  template std::string answer(const MultimodalModel<T>&, const ImageInput*, std::string_view, std::size_t,     \
                              const RenderOptions&);

MVL_INSTANTIATE_MODEL(float)
MVL_INSTANTIATE_MODEL(double)

}  // namespace mvl
