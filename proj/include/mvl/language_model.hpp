// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "mvl/layers.hpp"
#include "mvl/tokenizer.hpp"

namespace mvl {

struct LmConfig {
  std::size_t d_model = 64;
  std::size_t n_layers = 2;
  std::size_t n_heads = 4;
  std::size_t mlp_ratio = 4;
  std::size_t vocab_size = vocab::kSize;
  std::size_t context_length = 512;
  bool tie_embeddings = false;

  void validate() const;
  bool operator==(const LmConfig&) const = default;
};

/// Decoder-only transformer with learned absolute positions.
template <typename T>
class LanguageModel {
 public:
  static LanguageModel init(const LmConfig& config, std::uint64_t seed);

  /// Token-table lookup, [ids.size() x d_model]. Positions are added in forward_logits.
  Tensor<T> embed(std::span<const TokenId> ids) const;

  /// Causal forward pass: [T x d_model] -> [T x vocab_size]. Throws a
  /// context-overflow error when T exceeds context_length.
  Tensor<T> forward_logits(const Tensor<T>& embeddings) const;

  /// Greedy continuation of `prompt` (ties -> lowest id). Stops after EOS
  /// (included in the result) or `max_new` tokens.
  std::vector<TokenId> generate_greedy(const Tensor<T>& prompt, std::size_t max_new) const;

  const LmConfig& config() const { return config_; }
  void collect(const std::string& prefix, std::vector<NamedParam<T>>& out) const;

 private:
  LmConfig config_;
  Tensor<T> token_embedding_;  // [vocab x d]
  Tensor<T> position_;         // [context x d]
  std::vector<TransformerBlock<T>> blocks_;
  LayerNormParams<T> ln_final_;
  Tensor<T> head_;             // [d x vocab]; unused when tied
};

/// Index of the largest value; ties resolve to the lowest index.
template <typename T>
std::size_t argmax_lowest(std::span<const T> values);

}  // namespace mvl
