// SPDX-License-Identifier: Apache-2.0
//
// Vision tower + projector + language model. Projected patch rows replace the
// single IMG token of a rendered conversation; the language model then sees
// one contiguous embedding sequence.

#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mvl/language_model.hpp"
#include "mvl/projector.hpp"
#include "mvl/tokenizer.hpp"
#include "mvl/vision.hpp"

namespace mvl {

struct ModelConfig {
  EncoderConfig encoder;
  ProjectorVariant projector = ProjectorVariant::kMlp2;
  LmConfig lm;
  std::uint64_t seed = 0;

  ProjectorConfig projector_config() const { return {projector, encoder.d_vision, lm.d_model}; }
  /// Validates the parts and requires context_length >= token_count + 2.
  void validate() const;

  bool operator==(const ModelConfig&) const = default;
};

enum class ParamGroup { kEncoder, kProjector, kLm };

std::string_view to_string(ParamGroup group);

template <typename T>
class MultimodalModel {
 public:
  static MultimodalModel init(const ModelConfig& config);

  const ModelConfig& config() const { return config_; }
  const VisionEncoder<T>& encoder() const { return encoder_; }
  const Projector<T>& projector() const { return projector_; }
  const LanguageModel<T>& lm() const { return lm_; }

  /// Every parameter, prefixed "encoder.", "projector." or "lm.", in a fixed order.
  std::vector<NamedParam<T>> named_parameters() const;
  std::vector<NamedParam<T>> parameters(ParamGroup group) const;
  void set_requires_grad(ParamGroup group, bool on);

 private:
  ModelConfig config_;
  VisionEncoder<T> encoder_;
  Projector<T> projector_;
  LanguageModel<T> lm_;
};

/// A rendered conversation plus its (already preprocessed) image, if any.
struct PreparedSample {
  std::string id;
  RenderedSample rendered;
  std::shared_ptr<const ImageInput> image;
};

template <typename T>
struct AssembledSequence {
  Tensor<T> embeddings;            // [length x d_model]
  std::vector<TokenId> ids;        // IMG at every visual position
  std::vector<std::uint8_t> loss_mask;
  std::size_t visual_begin = 0;
  std::size_t visual_count = 0;
};

/// text_length - 1 + token_count with an image slot, text_length otherwise.
std::size_t assembled_length(const RenderedSample& rendered, std::size_t token_count);

/// Splices projected visual rows in place of the IMG token. `visual_features`
/// are encoder outputs (e.g. cached); pass nullptr for text-only samples.
template <typename T>
AssembledSequence<T> assemble_features(const MultimodalModel<T>& model, const RenderedSample& rendered,
                                       const Tensor<T>* visual_features);

/// As assemble_features, running the encoder on `image`. The context budget is
/// checked before any encoding work.
template <typename T>
AssembledSequence<T> assemble(const MultimodalModel<T>& model, const RenderedSample& rendered,
                              const ImageInput* image);

template <typename T>
struct SampleForward {
  Tensor<T> logits;                // [length x vocab]
  std::vector<TokenId> targets;    // targets[t] = ids[t + 1]; PAD at the end
  std::vector<std::uint8_t> mask;  // mask[t] = loss_mask[t + 1]; 0 at the end
  Tensor<T> loss;
};

/// Next-token loss of one sample. Throws an empty-supervision error naming
/// the sample when nothing is supervised.
template <typename T>
SampleForward<T> forward_sample(const MultimodalModel<T>& model, const PreparedSample& sample,
                                const Tensor<T>* cached_features = nullptr);

/// Mean over samples of each sample's masked next-token loss.
/// `cached_features`, when non-empty, is indexed like `samples`; entries for
/// text-only samples are ignored.
template <typename T>
Tensor<T> compute_loss(const MultimodalModel<T>& model, std::span<const PreparedSample> samples,
                       std::span<const std::optional<Tensor<T>>> cached_features = {});

/// Renders `prompt` as a generation prompt, greedily decodes and returns the
/// text with specials stripped. With an image and no placeholder in `prompt`,
/// "<image>\n" is prefixed.
template <typename T>
std::string answer(const MultimodalModel<T>& model, const ImageInput* image, std::string_view prompt,
                   std::size_t max_new, const RenderOptions& options = {});

/// Encoder output for an image with taping disabled.
template <typename T>
Tensor<T> encode_frozen(const MultimodalModel<T>& model, const ImageInput& image);

}  // namespace mvl
