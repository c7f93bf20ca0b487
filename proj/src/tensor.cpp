// SPDX-License-Identifier: Apache-2.0

#include "mvl/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <unordered_set>

#include <fmt/format.h>

#include "mvl/errors.hpp"

namespace mvl {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t extent : shape) n *= extent;
  return n;
}

namespace {
thread_local bool g_grad_enabled = true;
}  // namespace

bool grad_enabled() { return g_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(g_grad_enabled) { g_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { g_grad_enabled = previous_; }

std::string shape_string(const Shape& shape) {
  return fmt::format("[{}]", fmt::join(shape, "x"));
}

namespace {

template <typename T>
void require_rank2(const Tensor<T>& t, const char* op) {
  if (t.rank() != 2) {
    throw Error(ErrorKind::kDimension,
                fmt::format("{} expects a rank-2 tensor, got {}", op, shape_string(t.shape())));
  }
}

// c[m x n] += a[m x k] * b[k x n]
template <typename T>
void gemm_acc(const T* __restrict a, const T* __restrict b, T* __restrict c, std::size_t m, std::size_t k,
              std::size_t n) {
  for (std::size_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    const T* arow = a + i * k;
    for (std::size_t p = 0; p < k; ++p) {
      // Masked rows and causal attention leave many exact zeros.
      const T aip = arow[p];
      if (aip == T{0}) continue;
      const T* brow = b + p * n;
      for (std::size_t j = 0; j < n; ++j) crow[j] += aip * brow[j];
    }
  }
}

template <typename T>
std::vector<T> transposed(const T* a, std::size_t rows, std::size_t cols) {
  std::vector<T> out(rows * cols);
  for (std::size_t i = 0; i < rows; ++i)
    for (std::size_t j = 0; j < cols; ++j) out[j * rows + i] = a[i * cols + j];
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Tensor

template <typename T>
Tensor<T>::Tensor() : node_(std::make_shared<Node<T>>()) {
  node_->shape = {0};
}

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
  auto node = std::make_shared<Node<T>>();
  node->value.assign(shape_numel(shape), T{0});
  node->shape = std::move(shape);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

template <typename T>
Tensor<T> Tensor<T>::from(Shape shape, std::vector<T> values, bool requires_grad) {
  if (shape_numel(shape) != values.size()) {
    throw Error(ErrorKind::kShape, fmt::format("shape {} needs {} values, got {}", shape_string(shape),
                                               shape_numel(shape), values.size()));
  }
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->requires_grad = requires_grad;
  return Tensor(std::move(node));
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T value, bool requires_grad) {
  return from({}, {value}, requires_grad);
}

template <typename T>
std::size_t Tensor<T>::rows() const {
  return rank() == 2 ? shape()[0] : 1;
}

template <typename T>
std::size_t Tensor<T>::cols() const {
  return rank() == 0 ? 1 : shape().back();
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) {
    throw Error(ErrorKind::kContract, fmt::format("item() on tensor of shape {}", shape_string(shape())));
  }
  return node_->value[0];
}

template <typename T>
void Tensor<T>::zero_grad() {
  node_->grad.assign(node_->value.size(), T{0});
  node_->has_grad = true;
}

template <typename T>
void Tensor<T>::clear_grad() {
  node_->grad.clear();
  node_->grad.shrink_to_fit();
  node_->has_grad = false;
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return from(shape(), node_->value, false);
}

template <typename T>
Tensor<T> Tensor<T>::make_result(Shape shape, std::vector<T> values, const char* op,
                                 std::vector<Tensor> parents,
                                 std::function<void(Node<T>&)> backward_fn) {
  auto node = std::make_shared<Node<T>>();
  node->shape = std::move(shape);
  node->value = std::move(values);
  node->op = op;
  const bool any = g_grad_enabled && std::any_of(parents.begin(), parents.end(),
                                                 [](const Tensor& p) { return p.requires_grad(); });
  if (any) {
    node->requires_grad = true;
    node->parents.reserve(parents.size());
    for (auto& p : parents) node->parents.push_back(p.node_);
    node->backward_fn = std::move(backward_fn);
  }
  return Tensor(std::move(node));
}

// ---------------------------------------------------------------------------
// Kernels

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  const bool same = a.shape() == b.shape();
  const bool row_broadcast = a.rank() == 2 && b.rank() == 1 && b.numel() == a.cols();
  if (!same && !row_broadcast) {
    throw Error(ErrorKind::kDimension, fmt::format("add: cannot combine {} and {}",
                                                   shape_string(a.shape()), shape_string(b.shape())));
  }
  const auto av = a.data();
  const auto bv = b.data();
  std::vector<T> out(av.begin(), av.end());
  const std::size_t n = b.numel();
  if (same) {
    for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  } else {
    for (std::size_t r = 0; r < a.rows(); ++r)
      for (std::size_t j = 0; j < n; ++j) out[r * n + j] += bv[j];
  }
  return Tensor<T>::make_result(a.shape(), std::move(out), "add", {a, b}, [same, n](Node<T>& self) {
    const auto& g = self.grad;
    if (auto& pa = *self.parents[0]; pa.requires_grad) {
      auto& ga = pa.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i];
    }
    if (auto& pb = *self.parents[1]; pb.requires_grad) {
      auto& gb = pb.ensure_grad();
      if (same) {
        for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i];
      } else {
        for (std::size_t i = 0; i < g.size(); ++i) gb[i % n] += g[i];
      }
    }
  });
}

template <typename T>
Tensor<T> multiply(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.shape() != b.shape()) {
    throw Error(ErrorKind::kDimension, fmt::format("multiply: shapes {} and {} differ",
                                                   shape_string(a.shape()), shape_string(b.shape())));
  }
  const auto av = a.data();
  const auto bv = b.data();
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
  return Tensor<T>::make_result(a.shape(), std::move(out), "multiply", {a, b}, [](Node<T>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    const auto& g = self.grad;
    if (pa.requires_grad) {
      auto& ga = pa.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) ga[i] += g[i] * pb.value[i];
    }
    if (pb.requires_grad) {
      auto& gb = pb.ensure_grad();
      for (std::size_t i = 0; i < g.size(); ++i) gb[i] += g[i] * pa.value[i];
    }
  });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
  const auto av = a.data();
  std::vector<T> out(av.size());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * factor;
  return Tensor<T>::make_result(a.shape(), std::move(out), "scale", {a}, [factor](Node<T>& self) {
    auto& ga = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) ga[i] += self.grad[i] * factor;
  });
}

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.cols() != b.rows()) {
    throw Error(ErrorKind::kDimension, fmt::format("matmul: incompatible shapes {} and {}",
                                                   shape_string(a.shape()), shape_string(b.shape())));
  }
  const std::size_t m = a.rows();
  const std::size_t k = a.cols();
  const std::size_t n = b.cols();
  std::vector<T> out(m * n, T{0});
  gemm_acc(a.data().data(), b.data().data(), out.data(), m, k, n);
  return Tensor<T>::make_result({m, n}, std::move(out), "matmul", {a, b}, [m, k, n](Node<T>& self) {
    auto& pa = *self.parents[0];
    auto& pb = *self.parents[1];
    const T* g = self.grad.data();
    if (pa.requires_grad) {
      // dA = dC * B^T
      const auto bt = transposed(pb.value.data(), k, n);
      gemm_acc(g, bt.data(), pa.ensure_grad().data(), m, n, k);
    }
    if (pb.requires_grad) {
      // dB = A^T * dC
      const auto at = transposed(pa.value.data(), m, k);
      gemm_acc(at.data(), g, pb.ensure_grad().data(), k, m, n);
    }
  });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
  require_rank2(a, "transpose");
  const std::size_t r = a.rows();
  const std::size_t c = a.cols();
  return Tensor<T>::make_result({c, r}, transposed(a.data().data(), r, c), "transpose", {a},
                                [r, c](Node<T>& self) {
                                  auto& ga = self.parents[0]->ensure_grad();
                                  for (std::size_t i = 0; i < r; ++i)
                                    for (std::size_t j = 0; j < c; ++j) ga[i * c + j] += self.grad[j * r + i];
                                });
}

template <typename T>
Tensor<T> concat_rows(std::span<const Tensor<T>> parts) {
  if (parts.empty()) throw Error(ErrorKind::kDimension, "concat_rows: no inputs");
  const std::size_t c = parts[0].cols();
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_rank2(p, "concat_rows");
    if (p.cols() != c) {
      throw Error(ErrorKind::kDimension, fmt::format("concat_rows: column mismatch {} vs {}",
                                                     shape_string(parts[0].shape()), shape_string(p.shape())));
    }
    total += p.rows();
  }
  std::vector<T> out;
  out.reserve(total * c);
  for (const auto& p : parts) out.insert(out.end(), p.data().begin(), p.data().end());
  return Tensor<T>::make_result({total, c}, std::move(out), "concat_rows",
                                std::vector<Tensor<T>>(parts.begin(), parts.end()), [](Node<T>& self) {
                                  std::size_t offset = 0;
                                  for (auto& parent : self.parents) {
                                    const std::size_t len = parent->value.size();
                                    if (parent->requires_grad) {
                                      auto& gp = parent->ensure_grad();
                                      for (std::size_t i = 0; i < len; ++i) gp[i] += self.grad[offset + i];
                                    }
                                    offset += len;
                                  }
                                });
}

template <typename T>
Tensor<T> concat_cols(std::span<const Tensor<T>> parts) {
  if (parts.empty()) throw Error(ErrorKind::kDimension, "concat_cols: no inputs");
  const std::size_t r = parts[0].rows();
  std::size_t total = 0;
  for (const auto& p : parts) {
    require_rank2(p, "concat_cols");
    if (p.rows() != r) {
      throw Error(ErrorKind::kDimension, fmt::format("concat_cols: row mismatch {} vs {}",
                                                     shape_string(parts[0].shape()), shape_string(p.shape())));
    }
    total += p.cols();
  }
  std::vector<T> out(r * total);
  std::size_t offset = 0;
  for (const auto& p : parts) {
    const std::size_t c = p.cols();
    const auto v = p.data();
    for (std::size_t i = 0; i < r; ++i) std::copy_n(v.begin() + i * c, c, out.begin() + i * total + offset);
    offset += c;
  }
  return Tensor<T>::make_result({r, total}, std::move(out), "concat_cols",
                                std::vector<Tensor<T>>(parts.begin(), parts.end()), [r, total](Node<T>& self) {
                                  std::size_t off = 0;
                                  for (auto& parent : self.parents) {
                                    const std::size_t c = parent->shape[1];
                                    if (parent->requires_grad) {
                                      auto& gp = parent->ensure_grad();
                                      for (std::size_t i = 0; i < r; ++i)
                                        for (std::size_t j = 0; j < c; ++j) gp[i * c + j] += self.grad[i * total + off + j];
                                    }
                                    off += c;
                                  }
                                });
}

template <typename T>
Tensor<T> slice_rows(const Tensor<T>& a, std::size_t begin, std::size_t end) {
  require_rank2(a, "slice_rows");
  if (begin > end || end > a.rows()) {
    throw Error(ErrorKind::kDimension,
                fmt::format("slice_rows: range [{}, {}) outside {}", begin, end, shape_string(a.shape())));
  }
  const std::size_t c = a.cols();
  std::vector<T> out(a.data().begin() + begin * c, a.data().begin() + end * c);
  return Tensor<T>::make_result({end - begin, c}, std::move(out), "slice_rows", {a}, [begin, c](Node<T>& self) {
    auto& ga = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < self.grad.size(); ++i) ga[begin * c + i] += self.grad[i];
  });
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& a, std::size_t begin, std::size_t end) {
  require_rank2(a, "slice_cols");
  if (begin > end || end > a.cols()) {
    throw Error(ErrorKind::kDimension,
                fmt::format("slice_cols: range [{}, {}) outside {}", begin, end, shape_string(a.shape())));
  }
  const std::size_t r = a.rows();
  const std::size_t c = a.cols();
  const std::size_t w = end - begin;
  std::vector<T> out(r * w);
  const auto v = a.data();
  for (std::size_t i = 0; i < r; ++i) std::copy_n(v.begin() + i * c + begin, w, out.begin() + i * w);
  return Tensor<T>::make_result({r, w}, std::move(out), "slice_cols", {a}, [r, c, w, begin](Node<T>& self) {
    auto& ga = self.parents[0]->ensure_grad();
    for (std::size_t i = 0; i < r; ++i)
      for (std::size_t j = 0; j < w; ++j) ga[i * c + begin + j] += self.grad[i * w + j];
  });
}

template <typename T>
Tensor<T> embedding(const Tensor<T>& table, std::span<const TokenId> ids) {
  require_rank2(table, "embedding");
  const std::size_t vocab = table.rows();
  const std::size_t d = table.cols();
  std::vector<T> out(ids.size() * d);
  for (std::size_t i = 0; i < ids.size(); ++i) {
    if (ids[i] < 0 || static_cast<std::size_t>(ids[i]) >= vocab) {
      throw Error(ErrorKind::kVocabulary, fmt::format("token id {} outside [0, {})", ids[i], vocab));
    }
    std::copy_n(table.data().begin() + static_cast<std::size_t>(ids[i]) * d, d, out.begin() + i * d);
  }
  std::vector<TokenId> saved(ids.begin(), ids.end());
  return Tensor<T>::make_result({ids.size(), d}, std::move(out), "embedding", {table},
                                [saved = std::move(saved), d](Node<T>& self) {
                                  auto& gt = self.parents[0]->ensure_grad();
                                  for (std::size_t i = 0; i < saved.size(); ++i) {
                                    T* dst = gt.data() + static_cast<std::size_t>(saved[i]) * d;
                                    const T* src = self.grad.data() + i * d;
                                    for (std::size_t j = 0; j < d; ++j) dst[j] += src[j];
                                  }
                                });
}

template <typename T>
Tensor<T> layernorm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta, T eps) {
  require_rank2(x, "layernorm");
  const std::size_t r = x.rows();
  const std::size_t d = x.cols();
  if (gamma.numel() != d || beta.numel() != d) {
    throw Error(ErrorKind::kDimension,
                fmt::format("layernorm: input {} vs gamma {} / beta {}", shape_string(x.shape()),
                            shape_string(gamma.shape()), shape_string(beta.shape())));
  }
  std::vector<T> xhat(r * d);
  std::vector<T> rstd(r);
  std::vector<T> out(r * d);
  const auto xv = x.data();
  const auto gv = gamma.data();
  const auto bv = beta.data();
  for (std::size_t i = 0; i < r; ++i) {
    const T* row = xv.data() + i * d;
    T mu = 0;
    for (std::size_t j = 0; j < d; ++j) mu += row[j];
    mu /= static_cast<T>(d);
    T var = 0;
    for (std::size_t j = 0; j < d; ++j) var += (row[j] - mu) * (row[j] - mu);
    var /= static_cast<T>(d);
    rstd[i] = T{1} / std::sqrt(var + eps);
    for (std::size_t j = 0; j < d; ++j) {
      xhat[i * d + j] = (row[j] - mu) * rstd[i];
      out[i * d + j] = xhat[i * d + j] * gv[j] + bv[j];
    }
  }
  return Tensor<T>::make_result(
      x.shape(), std::move(out), "layernorm", {x, gamma, beta},
      [xhat = std::move(xhat), rstd = std::move(rstd), r, d](Node<T>& self) {
        auto& px = *self.parents[0];
        auto& pg = *self.parents[1];
        auto& pb = *self.parents[2];
        const auto& g = self.grad;
        if (pg.requires_grad) {
          auto& gg = pg.ensure_grad();
          for (std::size_t i = 0; i < r * d; ++i) gg[i % d] += g[i] * xhat[i];
        }
        if (pb.requires_grad) {
          auto& gb = pb.ensure_grad();
          for (std::size_t i = 0; i < r * d; ++i) gb[i % d] += g[i];
        }
        if (px.requires_grad) {
          auto& gx = px.ensure_grad();
          for (std::size_t i = 0; i < r; ++i) {
            T mean_dy = 0;
            T mean_dy_xhat = 0;
            for (std::size_t j = 0; j < d; ++j) {
              const T dy = g[i * d + j] * pg.value[j];
              mean_dy += dy;
              mean_dy_xhat += dy * xhat[i * d + j];
            }
            mean_dy /= static_cast<T>(d);
            mean_dy_xhat /= static_cast<T>(d);
            for (std::size_t j = 0; j < d; ++j) {
              const T dy = g[i * d + j] * pg.value[j];
              gx[i * d + j] += rstd[i] * (dy - mean_dy - xhat[i * d + j] * mean_dy_xhat);
            }
          }
        }
      });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  const auto xv = x.data();
  std::vector<T> out(xv.size());
  const T inv_sqrt2 = T(1) / std::numbers::sqrt2_v<T>;
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = T(0.5) * xv[i] * (T(1) + std::erf(xv[i] * inv_sqrt2));
  return Tensor<T>::make_result(x.shape(), std::move(out), "gelu", {x}, [inv_sqrt2](Node<T>& self) {
    auto& px = *self.parents[0];
    auto& gx = px.ensure_grad();
    const T inv_sqrt_2pi = std::numbers::inv_sqrtpi_v<T> * inv_sqrt2;
    for (std::size_t i = 0; i < gx.size(); ++i) {
      const T v = px.value[i];
      const T cdf = T(0.5) * (T(1) + std::erf(v * inv_sqrt2));
      const T pdf = inv_sqrt_2pi * std::exp(T(-0.5) * v * v);
      gx[i] += self.grad[i] * (cdf + v * pdf);
    }
  });
}

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x, bool causal) {
  require_rank2(x, "softmax_rows");
  const std::size_t r = x.rows();
  const std::size_t c = x.cols();
  if (c == 0) throw Error(ErrorKind::kDimension, "softmax_rows: zero columns");
  if (causal && r != c) {
    throw Error(ErrorKind::kDimension,
                fmt::format("softmax_rows: causal mask needs a square input, got {}", shape_string(x.shape())));
  }
  std::vector<T> out(r * c, T{0});
  const auto xv = x.data();
  for (std::size_t i = 0; i < r; ++i) {
    const std::size_t width = causal ? i + 1 : c;
    const T* row = xv.data() + i * c;
    T* dst = out.data() + i * c;
    T mx = row[0];
    for (std::size_t j = 1; j < width; ++j) mx = std::max(mx, row[j]);
    T total = 0;
    for (std::size_t j = 0; j < width; ++j) {
      dst[j] = std::exp(row[j] - mx);
      total += dst[j];
    }
    const T inv = T{1} / total;
    for (std::size_t j = 0; j < width; ++j) dst[j] *= inv;
  }
  auto result = Tensor<T>::make_result(x.shape(), std::move(out), "softmax_rows", {x}, nullptr);
  if (result.requires_grad()) {
    // The closure reads the output probabilities straight from its own node.
    result.node()->backward_fn = [r, c, causal](Node<T>& self) {
      auto& gx = self.parents[0]->ensure_grad();
      for (std::size_t i = 0; i < r; ++i) {
        const std::size_t width = causal ? i + 1 : c;
        const T* y = self.value.data() + i * c;
        const T* g = self.grad.data() + i * c;
        T dot = 0;
        for (std::size_t j = 0; j < width; ++j) dot += g[j] * y[j];
        for (std::size_t j = 0; j < width; ++j) gx[i * c + j] += y[j] * (g[j] - dot);
      }
    };
  }
  return result;
}

template <typename T>
Tensor<T> cross_entropy_masked(const Tensor<T>& logits, std::span<const TokenId> targets,
                               std::span<const std::uint8_t> mask) {
  require_rank2(logits, "cross_entropy_masked");
  const std::size_t rows = logits.rows();
  const std::size_t vocab = logits.cols();
  if (targets.size() != rows || mask.size() != rows) {
    throw Error(ErrorKind::kDimension,
                fmt::format("cross_entropy_masked: logits {} with {} targets and {} mask entries",
                            shape_string(logits.shape()), targets.size(), mask.size()));
  }
  std::size_t count = 0;
  for (std::size_t i = 0; i < rows; ++i) {
    if (targets[i] < 0 || static_cast<std::size_t>(targets[i]) >= vocab) {
      throw Error(ErrorKind::kVocabulary, fmt::format("target {} outside [0, {})", targets[i], vocab));
    }
    if (mask[i] != 0) ++count;
  }
  if (count == 0) throw Error(ErrorKind::kEmptySupervision, "mask selects no positions");

  const auto lv = logits.data();
  std::vector<T> probs(rows * vocab, T{0});
  T total = 0;
  for (std::size_t i = 0; i < rows; ++i) {
    if (mask[i] == 0) continue;
    const T* row = lv.data() + i * vocab;
    T mx = row[0];
    for (std::size_t j = 1; j < vocab; ++j) mx = std::max(mx, row[j]);
    T z = 0;
    for (std::size_t j = 0; j < vocab; ++j) {
      probs[i * vocab + j] = std::exp(row[j] - mx);
      z += probs[i * vocab + j];
    }
    for (std::size_t j = 0; j < vocab; ++j) probs[i * vocab + j] /= z;
    total += std::log(z) + mx - row[targets[i]];
  }
  const T inv_count = T{1} / static_cast<T>(count);
  std::vector<TokenId> saved_targets(targets.begin(), targets.end());
  std::vector<std::uint8_t> saved_mask(mask.begin(), mask.end());
  return Tensor<T>::make_result(
      {}, {total * inv_count}, "cross_entropy_masked", {logits},
      [probs = std::move(probs), saved_targets = std::move(saved_targets), saved_mask = std::move(saved_mask),
       vocab, inv_count](Node<T>& self) {
        auto& gl = self.parents[0]->ensure_grad();
        const T upstream = self.grad[0] * inv_count;
        for (std::size_t i = 0; i < saved_mask.size(); ++i) {
          if (saved_mask[i] == 0) continue;
          for (std::size_t j = 0; j < vocab; ++j) gl[i * vocab + j] += upstream * probs[i * vocab + j];
          gl[i * vocab + static_cast<std::size_t>(saved_targets[i])] -= upstream;
        }
      });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
  T total = 0;
  for (T v : x.data()) total += v;
  return Tensor<T>::make_result({}, {total}, "sum", {x}, [](Node<T>& self) {
    auto& gx = self.parents[0]->ensure_grad();
    for (auto& g : gx) g += self.grad[0];
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
  if (x.numel() == 0) throw Error(ErrorKind::kDimension, "mean of an empty tensor");
  return scale(sum(x), T{1} / static_cast<T>(x.numel()));
}

template <typename T>
void backward(const Tensor<T>& loss) {
  if (loss.numel() != 1) {
    throw Error(ErrorKind::kContract,
                fmt::format("backward needs a one-element loss, got {}", shape_string(loss.shape())));
  }
  if (!loss.requires_grad()) return;

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<Node<T>*> order;
  std::unordered_set<Node<T>*> seen;
  std::vector<std::pair<Node<T>*, std::size_t>> stack;
  stack.emplace_back(loss.node(), 0);
  seen.insert(loss.node());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      Node<T>* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) stack.emplace_back(parent, 0);
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (Node<T>* node : order) {
    if (node->backward_fn) {
      node->grad.assign(node->value.size(), T{0});
      node->has_grad = true;
    }
  }
  loss.node()->ensure_grad()[0] += T{1};
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward_fn) (*it)->backward_fn(**it);
  }
}

template <typename To, typename From>
Tensor<To> cast(const Tensor<From>& x) {
  std::vector<To> values(x.data().begin(), x.data().end());
  return Tensor<To>::from(x.shape(), std::move(values), x.requires_grad());
}

#define MVL_INSTANTIATE_KERNELS(T)                                                                     \
  template class Tensor<T>;                                                                            \
  template Tensor<T> add(const Tensor<T>&, const Tensor<T>&);                                          \
  template Tensor<T> multiply(const Tensor<T>&, const Tensor<T>&);                                     \
  template Tensor<T> scale(const Tensor<T>&, T);                                                       \
  template Tensor<T> matmul(const Tensor<T>&, const Tensor<T>&);                                       \
  template Tensor<T> transpose(const Tensor<T>&);                                                      \
  template Tensor<T> concat_rows(std::span<const Tensor<T>>);                                          \
  template Tensor<T> concat_cols(std::span<const Tensor<T>>);                                          \
  template Tensor<T> slice_rows(const Tensor<T>&, std::size_t, std::size_t);                           \
  template Tensor<T> slice_cols(const Tensor<T>&, std::size_t, std::size_t);                           \
  template Tensor<T> embedding(const Tensor<T>&, std::span<const TokenId>);                            \
  template Tensor<T> layernorm(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);               \
  template Tensor<T> gelu(const Tensor<T>&);                                                           \
  template Tensor<T> softmax_rows(const Tensor<T>&, bool);                                             \
  template Tensor<T> cross_entropy_masked(const Tensor<T>&, std::span<const TokenId>,                  \
                                          std::span<const std::uint8_t>);                              \
  template Tensor<T> sum(const Tensor<T>&);                                                            \
  template Tensor<T> mean(const Tensor<T>&);                                                           \
  template void backward(const Tensor<T>&);

MVL_INSTANTIATE_KERNELS(float)
MVL_INSTANTIATE_KERNELS(double)

template Tensor<double> cast(const Tensor<float>&);
template Tensor<float> cast(const Tensor<double>&);
template Tensor<float> cast(const Tensor<float>&);
template Tensor<double> cast(const Tensor<double>&);

}  // namespace mvl
