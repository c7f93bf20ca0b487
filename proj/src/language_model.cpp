// SPDX-License-Identifier: Apache-2.0

#include "mvl/language_model.hpp"

#include <fmt/format.h>

#include "mvl/errors.hpp"

namespace mvl {

void LmConfig::validate() const {
  if (d_model == 0 || n_heads == 0 || d_model % n_heads != 0) {
    throw Error(ErrorKind::kConfig, fmt::format("lm: d_model {} must be divisible by n_heads {}", d_model, n_heads));
  }
  if (vocab_size < vocab::kSize) {
    throw Error(ErrorKind::kConfig, fmt::format("lm: vocab_size {} below byte vocabulary {}", vocab_size, vocab::kSize));
  }
  if (context_length < 2) throw Error(ErrorKind::kConfig, "lm: context_length must be at least 2");
  if (mlp_ratio == 0) throw Error(ErrorKind::kConfig, "lm: mlp_ratio must be positive");
}

template <typename T>
LanguageModel<T> LanguageModel<T>::init(const LmConfig& config, std::uint64_t seed) {
  config.validate();
  Rng rng(seed);
  LanguageModel lm;
  lm.config_ = config;
  lm.token_embedding_ = init_truncated_normal<T>({config.vocab_size, config.d_model}, rng);
  lm.position_ = init_truncated_normal<T>({config.context_length, config.d_model}, rng);
  for (std::size_t i = 0; i < config.n_layers; ++i) {
    lm.blocks_.push_back(
        TransformerBlock<T>::init(config.d_model, config.n_heads, config.d_model * config.mlp_ratio, rng));
  }
  lm.ln_final_ = LayerNormParams<T>::init(config.d_model);
  if (!config.tie_embeddings) lm.head_ = init_truncated_normal<T>({config.d_model, config.vocab_size}, rng);
  return lm;
}

template <typename T>
Tensor<T> LanguageModel<T>::embed(std::span<const TokenId> ids) const {
  return embedding(token_embedding_, ids);
}

template <typename T>
Tensor<T> LanguageModel<T>::forward_logits(const Tensor<T>& embeddings) const {
  if (embeddings.rank() != 2 || embeddings.cols() != config_.d_model) {
    throw Error(ErrorKind::kShape, fmt::format("lm expects [T x {}] embeddings, got {}", config_.d_model,
                                               shape_string(embeddings.shape())));
  }
  const std::size_t length = embeddings.rows();
  if (length > config_.context_length) {
    throw Error(ErrorKind::kContextOverflow,
                fmt::format("sequence of {} positions exceeds context length {}", length, config_.context_length));
  }
  auto x = add(embeddings, slice_rows(position_, 0, length));
  for (const auto& block : blocks_) x = block.forward(x, /*causal=*/true);
  x = ln_final_(x);
  return config_.tie_embeddings ? matmul(x, transpose(token_embedding_)) : matmul(x, head_);
}

template <typename T>
std::size_t argmax_lowest(std::span<const T> values) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < values.size(); ++i)
    if (values[i] > values[best]) best = i;
  return best;
}

template <typename T>
std::vector<TokenId> LanguageModel<T>::generate_greedy(const Tensor<T>& prompt, std::size_t max_new) const {
  if (prompt.rows() + max_new > config_.context_length) {
    throw Error(ErrorKind::kContextOverflow,
                fmt::format("prompt of {} positions plus {} new tokens exceeds context length {}", prompt.rows(),
                            max_new, config_.context_length));
  }
  NoGradGuard no_grad;
  std::vector<TokenId> generated;
  Tensor<T> sequence = prompt;
  while (generated.size() < max_new) {
    const auto logits = forward_logits(sequence);
    const auto last = logits.data().subspan((logits.rows() - 1) * logits.cols(), logits.cols());
    const auto next = static_cast<TokenId>(argmax_lowest(last));
    generated.push_back(next);
    if (next == vocab::kEos) break;
    const TokenId ids[] = {next};
    const Tensor<T> parts[] = {sequence, embed(ids)};
    sequence = concat_rows<T>(parts);
  }
  return generated;
}

template <typename T>
void LanguageModel<T>::collect(const std::string& prefix, std::vector<NamedParam<T>>& out) const {
  out.push_back({prefix + ".token_embedding", token_embedding_});
  out.push_back({prefix + ".position", position_});
  for (std::size_t i = 0; i < blocks_.size(); ++i) blocks_[i].collect(fmt::format("{}.blocks.{}", prefix, i), out);
  ln_final_.collect(prefix + ".ln_final", out);
  if (!config_.tie_embeddings) out.push_back({prefix + ".head", head_});
}

template class LanguageModel<float>;
template class LanguageModel<double>;
template std::size_t argmax_lowest(std::span<const float>);
template std::size_t argmax_lowest(std::span<const double>);

}  // namespace mvl
