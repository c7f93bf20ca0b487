// SPDX-License-Identifier: Apache-2.0
//
// Dense row-major tensors with a reverse-mode tape. Every op that sees an
// input requiring grad records a node holding its parents and a backward
// closure; ops on grad-free inputs return plain values with no tape cost.
// The tape is whatever graph hangs off the tensors of one forward pass.

#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace mvl {

using Shape = std::vector<std::size_t>;
using TokenId = std::int32_t;

std::size_t shape_numel(const Shape& shape);
bool grad_enabled();

/// Disables taping on this thread for its lifetime (inference, frozen towers).
class NoGradGuard {
 public:
  NoGradGuard();
  ~NoGradGuard();
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool previous_;
};

std::string shape_string(const Shape& shape);

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;
  bool has_grad = false;
  bool requires_grad = false;
  const char* op = "leaf";
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into parents that require grad.
  std::function<void(Node&)> backward_fn;

  std::vector<T>& ensure_grad() {
    if (!has_grad) {
      grad.assign(value.size(), T{0});
      has_grad = true;
    }
    return grad;
  }
};

template <typename T>
class Tensor {
 public:
  Tensor();

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false);
  static Tensor scalar(T value, bool requires_grad = false);

  const Shape& shape() const { return node_->shape; }
  std::size_t rank() const { return node_->shape.size(); }
  std::size_t numel() const { return node_->value.size(); }
  /// Leading extent of a rank-2 tensor (1 for rank 0/1).
  std::size_t rows() const;
  /// Trailing extent (1 for rank 0).
  std::size_t cols() const;

  std::span<const T> data() const { return node_->value; }
  /// Mutable values; meant for leaves (initialisation, optimizer updates).
  std::span<T> mutable_data() { return node_->value; }
  T item() const;
  T at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool on) { node_->requires_grad = on; }
  bool is_leaf() const { return !node_->backward_fn; }

  bool has_grad() const { return node_->has_grad; }
  std::span<const T> grad() const { return node_->grad; }
  std::span<T> mutable_grad() { return node_->grad; }
  /// Allocates (if needed) and fills the grad buffer with zeros.
  void zero_grad();
  /// Drops the grad buffer entirely.
  void clear_grad();

  /// Deep copy of the values as a fresh leaf.
  Tensor detach() const;

  Node<T>* node() const { return node_.get(); }
  const std::shared_ptr<Node<T>>& node_ptr() const { return node_; }

  // Builds a taped result. If no parent requires grad, parents and the
  // backward closure are dropped.
  static Tensor make_result(Shape shape, std::vector<T> values, const char* op,
                            std::vector<Tensor> parents,
                            std::function<void(Node<T>&)> backward_fn);

 private:
  explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}
  std::shared_ptr<Node<T>> node_;
};

// Kernels. All 2-D operands are row-major [rows x cols].

/// Elementwise sum; `b` may also be a rank-1 row vector broadcast over rows of `a`.
template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
/// Elementwise (Hadamard) product of equal shapes.
template <typename T> Tensor<T> multiply(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& a, T factor);
template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> transpose(const Tensor<T>& a);
template <typename T> Tensor<T> concat_rows(std::span<const Tensor<T>> parts);
template <typename T> Tensor<T> concat_cols(std::span<const Tensor<T>> parts);
template <typename T> Tensor<T> slice_rows(const Tensor<T>& a, std::size_t begin, std::size_t end);
template <typename T> Tensor<T> slice_cols(const Tensor<T>& a, std::size_t begin, std::size_t end);
/// Gathers rows of `table` [V x d]; throws a vocabulary error on ids outside [0, V).
template <typename T> Tensor<T> embedding(const Tensor<T>& table, std::span<const TokenId> ids);
/// Row-wise layer normalisation with affine gamma/beta of length cols.
template <typename T>
Tensor<T> layernorm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps = T(1e-5));
/// Exact (erf) GELU.
template <typename T> Tensor<T> gelu(const Tensor<T>& x);
/// Max-subtracted softmax per row. With `causal`, entry (i, j > i) gets
/// probability exactly zero; the input must then be square.
template <typename T> Tensor<T> softmax_rows(const Tensor<T>& x, bool causal = false);
/// Mean negative log-likelihood over rows whose mask is 1. Rows with mask 0
/// receive an exactly-zero gradient.
template <typename T>
Tensor<T> cross_entropy_masked(const Tensor<T>& logits, std::span<const TokenId> targets,
                               std::span<const std::uint8_t> mask);
template <typename T> Tensor<T> sum(const Tensor<T>& x);
template <typename T> Tensor<T> mean(const Tensor<T>& x);

/// Reverse sweep from a one-element tensor. Leaf grads accumulate across
/// calls; interior grads are recomputed each call.
template <typename T> void backward(const Tensor<T>& loss);

/// Value-preserving precision conversion (new leaf, same requires_grad flag).
template <typename To, typename From> Tensor<To> cast(const Tensor<From>& x);

}  // namespace mvl
