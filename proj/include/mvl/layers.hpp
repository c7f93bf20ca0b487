// SPDX-License-Identifier: Apache-2.0
//
// Building blocks shared by the vision tower and the language model.

#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "mvl/errors.hpp"
#include "mvl/optim.hpp"
#include "mvl/rng.hpp"
#include "mvl/tensor.hpp"

namespace mvl {

inline constexpr double kInitStd = 0.02;

template <typename T>
Tensor<T> init_truncated_normal(Shape shape, Rng& rng, double stddev = kInitStd) {
  std::vector<T> values(shape_numel(shape));
  for (auto& v : values) v = static_cast<T>(rng.truncated_normal(stddev));
  return Tensor<T>::from(std::move(shape), std::move(values));
}

template <typename T>
Tensor<T> init_constant(Shape shape, T value) {
  return Tensor<T>::from(shape, std::vector<T>(shape_numel(shape), value));
}

template <typename T>
struct Linear {
  Tensor<T> weight;  // [in x out]
  Tensor<T> bias;    // [out]

  static Linear init(std::size_t in, std::size_t out, Rng& rng) {
    return {init_truncated_normal<T>({in, out}, rng), init_constant<T>({out}, T{0})};
  }

  Tensor<T> operator()(const Tensor<T>& x) const { return add(matmul(x, weight), bias); }

  void collect(const std::string& prefix, std::vector<NamedParam<T>>& out) const {
    out.push_back({prefix + ".weight", weight});
    out.push_back({prefix + ".bias", bias});
  }
};

template <typename T>
struct LayerNormParams {
  Tensor<T> gamma;
  Tensor<T> beta;

  static LayerNormParams init(std::size_t width) {
    return {init_constant<T>({width}, T{1}), init_constant<T>({width}, T{0})};
  }

  Tensor<T> operator()(const Tensor<T>& x) const { return layernorm(x, gamma, beta); }

  void collect(const std::string& prefix, std::vector<NamedParam<T>>& out) const {
    out.push_back({prefix + ".gamma", gamma});
    out.push_back({prefix + ".beta", beta});
  }
};

/// Multi-head self-attention over the rows of `qkv` = [T x 3d] (q | k | v).
template <typename T>
Tensor<T> multi_head_attention(const Tensor<T>& qkv, std::size_t n_heads, bool causal) {
  const std::size_t width = qkv.cols() / 3;
  const std::size_t head_dim = width / n_heads;
  const T inv_sqrt = T{1} / std::sqrt(static_cast<T>(head_dim));
  std::vector<Tensor<T>> heads;
  heads.reserve(n_heads);
  for (std::size_t h = 0; h < n_heads; ++h) {
    const std::size_t off = h * head_dim;
    auto q = slice_cols(qkv, off, off + head_dim);
    auto k = slice_cols(qkv, width + off, width + off + head_dim);
    auto v = slice_cols(qkv, 2 * width + off, 2 * width + off + head_dim);
    auto scores = scale(matmul(q, transpose(k)), inv_sqrt);
    heads.push_back(matmul(softmax_rows(scores, causal), v));
  }
  return concat_cols<T>(heads);
}

/// Pre-norm transformer block: x + attn(ln1 x), then + mlp(ln2 x).
template <typename T>
struct TransformerBlock {
  LayerNormParams<T> ln1;
  Linear<T> qkv;
  Linear<T> proj;
  LayerNormParams<T> ln2;
  Linear<T> fc1;
  Linear<T> fc2;
  std::size_t n_heads = 1;

  static TransformerBlock init(std::size_t width, std::size_t heads, std::size_t mlp_width, Rng& rng) {
    if (heads == 0 || width % heads != 0) {
      throw Error(ErrorKind::kConfig, "transformer width must be divisible by the head count");
    }
    TransformerBlock b;
    b.ln1 = LayerNormParams<T>::init(width);
    b.qkv = Linear<T>::init(width, 3 * width, rng);
    b.proj = Linear<T>::init(width, width, rng);
    b.ln2 = LayerNormParams<T>::init(width);
    b.fc1 = Linear<T>::init(width, mlp_width, rng);
    b.fc2 = Linear<T>::init(mlp_width, width, rng);
    b.n_heads = heads;
    return b;
  }

  Tensor<T> forward(const Tensor<T>& x, bool causal) const {
    auto attended = proj(multi_head_attention(qkv(ln1(x)), n_heads, causal));
    auto h = add(x, attended);
    return add(h, fc2(gelu(fc1(ln2(h)))));
  }

  void collect(const std::string& prefix, std::vector<NamedParam<T>>& out) const {
    ln1.collect(prefix + ".ln1", out);
    qkv.collect(prefix + ".attn.qkv", out);
    proj.collect(prefix + ".attn.proj", out);
    ln2.collect(prefix + ".ln2", out);
    fc1.collect(prefix + ".mlp.fc1", out);
    fc2.collect(prefix + ".mlp.fc2", out);
  }
};

}  // namespace mvl
