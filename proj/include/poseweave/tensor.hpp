#pragma once

// Minimal reverse-mode autodiff tensor. Row-major dense storage, dynamic
// graph built op-by-op, explicit backward(). Templated on the scalar type:
// training runs in float, gradient-check probes in double.

#include <Eigen/Core>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <unordered_set>
#include <vector>

#include "poseweave/common.hpp"

namespace poseweave::nn {

using Shape = std::vector<int64_t>;

inline int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

inline bool same_shape(const Shape& a, const Shape& b) { return a == b; }

namespace detail {

inline thread_local bool g_grad_enabled = true;

template <typename T>
struct Node {
  Shape shape;
  std::vector<T> values;
  std::vector<T> grad;  // lazily allocated
  bool requires_grad = false;
  std::vector<std::shared_ptr<Node>> parents;
  std::function<void(Node&)> backward_fn;  // reads this->grad, accumulates into parents

  int64_t numel() const { return int64_t(values.size()); }

  void ensure_grad() {
    if (grad.size() != values.size()) grad.assign(values.size(), T(0));
  }
};

}  // namespace detail

// RAII guard disabling graph construction (evaluation / inference paths).
struct NoGradGuard {
  bool prev;
  NoGradGuard() : prev(detail::g_grad_enabled) { detail::g_grad_enabled = false; }
  ~NoGradGuard() { detail::g_grad_enabled = prev; }
};

inline bool grad_enabled() { return detail::g_grad_enabled; }

template <typename T>
class Tensor {
 public:
  using NodeT = detail::Node<T>;

  Tensor() = default;

  static Tensor leaf(Shape shape, bool requires_grad = false) {
    auto n = std::make_shared<NodeT>();
    n->shape = std::move(shape);
    n->values.assign(size_t(shape_numel(n->shape)), T(0));
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  static Tensor from_data(Shape shape, std::vector<T> values, bool requires_grad = false) {
    check(int64_t(values.size()) == shape_numel(shape), "Tensor::from_data: size mismatch");
    auto n = std::make_shared<NodeT>();
    n->shape = std::move(shape);
    n->values = std::move(values);
    n->requires_grad = requires_grad;
    return Tensor(std::move(n));
  }

  static Tensor scalar(T v) { return from_data({1}, {v}); }

  static Tensor full(Shape shape, T v) {
    auto t = leaf(std::move(shape));
    std::fill(t.node_->values.begin(), t.node_->values.end(), v);
    return t;
  }

  static Tensor randn(Shape shape, Rng& rng, T stddev = T(1), T mean = T(0)) {
    auto t = leaf(std::move(shape));
    for (auto& v : t.node_->values) v = T(rng.normal()) * stddev + mean;
    return t;
  }

  static Tensor rand_uniform(Shape shape, Rng& rng, T lo, T hi) {
    auto t = leaf(std::move(shape));
    for (auto& v : t.node_->values) v = lo + (hi - lo) * T(rng.uniform());
    return t;
  }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  int64_t numel() const { return node_->numel(); }
  int64_t dim(int i) const { return node_->shape[size_t(i)]; }
  int rank() const { return int(node_->shape.size()); }

  const T* data() const { return node_->values.data(); }
  T* mutable_data() { return node_->values.data(); }
  const std::vector<T>& values() const { return node_->values; }
  std::vector<T>& mutable_values() { return node_->values; }

  bool requires_grad() const { return node_->requires_grad; }
  void set_requires_grad(bool b) { node_->requires_grad = b; }

  const std::vector<T>& grad() const {
    const_cast<NodeT*>(node_.get())->ensure_grad();
    return node_->grad;
  }
  std::vector<T>& mutable_grad() {
    node_->ensure_grad();
    return node_->grad;
  }
  void zero_grad() {
    if (!node_->grad.empty()) std::fill(node_->grad.begin(), node_->grad.end(), T(0));
  }

  T item() const {
    check(numel() == 1, "Tensor::item: not a scalar");
    return node_->values[0];
  }

  bool all_finite() const {
    for (T v : node_->values)
      if (!std::isfinite(double(v))) return false;
    return true;
  }

  std::shared_ptr<NodeT> node() const { return node_; }

  explicit Tensor(std::shared_ptr<NodeT> n) : node_(std::move(n)) {}

 private:
  std::shared_ptr<NodeT> node_;
};

using Tensorf = Tensor<float>;

// ---------------------------------------------------------------------------
// Graph plumbing
// ---------------------------------------------------------------------------

namespace detail {

template <typename T>
Tensor<T> make_op(Shape shape, std::vector<T> values,
                  std::vector<std::shared_ptr<Node<T>>> parents,
                  std::function<void(Node<T>&)> backward) {
  auto n = std::make_shared<Node<T>>();
  n->shape = std::move(shape);
  n->values = std::move(values);
  bool need = false;
  if (g_grad_enabled) {
    for (const auto& p : parents)
      if (p && p->requires_grad) { need = true; break; }
  }
  if (need) {
    n->requires_grad = true;
    n->parents = std::move(parents);
    n->backward_fn = std::move(backward);
  }
  return Tensor<T>(std::move(n));
}

// rows = product of leading dims, cols = last dim
template <typename T>
std::pair<int64_t, int64_t> as_matrix(const Tensor<T>& t) {
  check(t.rank() >= 1, "expected rank >= 1");
  int64_t cols = t.dim(t.rank() - 1);
  return {t.numel() / cols, cols};
}

template <typename T>
using EMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename T>
using ECMap =
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

// C (M x N) = alpha * op(A) * op(B) + beta * C
template <typename T>
void gemm(T* c, const T* a, const T* b, int64_t m, int64_t k, int64_t n, bool ta, bool tb,
          T alpha = T(1), T beta = T(0)) {
  EMap<T> C(c, m, n);
  auto apply = [&](const auto& A, const auto& B) {
    if (beta == T(0))
      C.noalias() = alpha * (A * B);
    else if (beta == T(1))
      C.noalias() += alpha * (A * B);
    else {
      C *= beta;
      C.noalias() += alpha * (A * B);
    }
  };
  if (!ta && !tb) apply(ECMap<T>(a, m, k), ECMap<T>(b, k, n));
  else if (ta && !tb) apply(ECMap<T>(a, k, m).transpose(), ECMap<T>(b, k, n));
  else if (!ta && tb) apply(ECMap<T>(a, m, k), ECMap<T>(b, n, k).transpose());
  else apply(ECMap<T>(a, k, m).transpose(), ECMap<T>(b, n, k).transpose());
}

}  // namespace detail

// ---------------------------------------------------------------------------
// backward: reverse-mode accumulation from a scalar loss.
// Leaf gradients accumulate across calls; interior gradients are reset per
// call so repeated backward() on the same graph adds one clean contribution.
// ---------------------------------------------------------------------------

template <typename T>
void backward(const Tensor<T>& loss) {
  check(loss.numel() == 1, "backward: loss must be scalar");
  check(loss.requires_grad(), "backward: loss does not require grad");
  using NodeT = detail::Node<T>;

  std::vector<NodeT*> order;
  std::unordered_set<NodeT*> visited;
  std::vector<std::pair<NodeT*, size_t>> stack;
  stack.push_back({loss.node().get(), 0});
  visited.insert(loss.node().get());
  while (!stack.empty()) {
    auto& [node, idx] = stack.back();
    if (idx < node->parents.size()) {
      NodeT* p = node->parents[idx].get();
      ++idx;
      if (p && p->requires_grad && !visited.count(p)) {
        visited.insert(p);
        stack.push_back({p, 0});
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }
  // order is post-order: parents before children; traverse reversed.
  for (NodeT* n : order) {
    if (n->backward_fn) {  // interior node: reset before this pass
      n->grad.assign(n->values.size(), T(0));
    } else {
      n->ensure_grad();
    }
  }
  loss.node()->grad[0] += T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    NodeT* n = *it;
    if (n->backward_fn) n->backward_fn(*n);
  }
}

// ---------------------------------------------------------------------------
// Elementwise and scalar ops
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  check(same_shape(a.shape(), b.shape()), "add: shape mismatch");
  std::vector<T> out(a.values());
  const T* pb = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] += pb[i];
  auto an = a.node(), bn = b.node();
  return detail::make_op<T>(a.shape(), std::move(out), {an, bn},
                            [an = an.get(), bn = bn.get()](detail::Node<T>& n) {
                              if (an->requires_grad) {
                                an->ensure_grad();
                                for (size_t i = 0; i < n.grad.size(); ++i) an->grad[i] += n.grad[i];
                              }
                              if (bn->requires_grad) {
                                bn->ensure_grad();
                                for (size_t i = 0; i < n.grad.size(); ++i) bn->grad[i] += n.grad[i];
                              }
                            });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  check(same_shape(a.shape(), b.shape()), "sub: shape mismatch");
  std::vector<T> out(a.values());
  const T* pb = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] -= pb[i];
  auto an = a.node(), bn = b.node();
  return detail::make_op<T>(a.shape(), std::move(out), {an, bn},
                            [an = an.get(), bn = bn.get()](detail::Node<T>& n) {
                              if (an->requires_grad) {
                                an->ensure_grad();
                                for (size_t i = 0; i < n.grad.size(); ++i) an->grad[i] += n.grad[i];
                              }
                              if (bn->requires_grad) {
                                bn->ensure_grad();
                                for (size_t i = 0; i < n.grad.size(); ++i) bn->grad[i] -= n.grad[i];
                              }
                            });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  check(same_shape(a.shape(), b.shape()), "mul: shape mismatch");
  std::vector<T> out(a.values());
  const T* pb = b.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] *= pb[i];
  auto an = a.node(), bn = b.node();
  return detail::make_op<T>(a.shape(), std::move(out), {an, bn},
                            [an = an.get(), bn = bn.get()](detail::Node<T>& n) {
                              if (an->requires_grad) {
                                an->ensure_grad();
                                for (size_t i = 0; i < n.grad.size(); ++i)
                                  an->grad[i] += n.grad[i] * bn->values[i];
                              }
                              if (bn->requires_grad) {
                                bn->ensure_grad();
                                for (size_t i = 0; i < n.grad.size(); ++i)
                                  bn->grad[i] += n.grad[i] * an->values[i];
                              }
                            });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T c) {
  std::vector<T> out(a.values());
  for (auto& v : out) v += c;
  auto an = a.node();
  return detail::make_op<T>(a.shape(), std::move(out), {an},
                            [an = an.get()](detail::Node<T>& n) {
                              an->ensure_grad();
                              for (size_t i = 0; i < n.grad.size(); ++i) an->grad[i] += n.grad[i];
                            });
}

template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& a, T c) {
  std::vector<T> out(a.values());
  for (auto& v : out) v *= c;
  auto an = a.node();
  return detail::make_op<T>(a.shape(), std::move(out), {an},
                            [an = an.get(), c](detail::Node<T>& n) {
                              an->ensure_grad();
                              for (size_t i = 0; i < n.grad.size(); ++i)
                                an->grad[i] += c * n.grad[i];
                            });
}

template <typename T>
Tensor<T> neg(const Tensor<T>& a) { return mul_scalar(a, T(-1)); }

namespace detail {

// Shared skeleton for unary elementwise ops: f(x) and df(x, y)/dx.
template <typename T, typename F, typename DF>
Tensor<T> unary_op(const Tensor<T>& a, F f, DF df) {
  std::vector<T> out(a.values().size());
  const T* pa = a.data();
  for (size_t i = 0; i < out.size(); ++i) out[i] = f(pa[i]);
  auto an = a.node();
  return make_op<T>(a.shape(), std::move(out), {an},
                    [an = an.get(), df](Node<T>& n) {
                      an->ensure_grad();
                      for (size_t i = 0; i < n.grad.size(); ++i)
                        an->grad[i] += n.grad[i] * df(an->values[i], n.values[i]);
                    });
}

}  // namespace detail

template <typename T>
Tensor<T> relu(const Tensor<T>& a) {
  return detail::unary_op(a, [](T x) { return x > T(0) ? x : T(0); },
                          [](T x, T) { return x > T(0) ? T(1) : T(0); });
}

template <typename T>
Tensor<T> leaky_relu(const Tensor<T>& a, T slope = T(0.01)) {
  return detail::unary_op(a, [slope](T x) { return x > T(0) ? x : slope * x; },
                          [slope](T x, T) { return x > T(0) ? T(1) : slope; });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& a) {
  return detail::unary_op(
      a,
      [](T x) {
        return x >= T(0) ? T(1) / (T(1) + std::exp(-x))
                         : std::exp(x) / (T(1) + std::exp(x));
      },
      [](T, T y) { return y * (T(1) - y); });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& a) {
  // Exact erf form; derivative = Phi(x) + x * phi(x).
  static constexpr double kInvSqrt2 = 0.70710678118654752440;
  static constexpr double kInvSqrt2Pi = 0.39894228040143267794;
  return detail::unary_op(
      a, [](T x) { return T(0.5 * double(x) * (1.0 + std::erf(double(x) * kInvSqrt2))); },
      [](T x, T) {
        const double cdf = 0.5 * (1.0 + std::erf(double(x) * kInvSqrt2));
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * double(x) * double(x));
        return T(cdf + double(x) * pdf);
      });
}

template <typename T>
Tensor<T> exp(const Tensor<T>& a) {
  return detail::unary_op(a, [](T x) { return std::exp(x); }, [](T, T y) { return y; });
}

template <typename T>
Tensor<T> log(const Tensor<T>& a) {
  return detail::unary_op(a, [](T x) { return std::log(x); }, [](T x, T) { return T(1) / x; });
}

template <typename T>
Tensor<T> sqrt(const Tensor<T>& a) {
  return detail::unary_op(a, [](T x) { return std::sqrt(x); },
                          [](T, T y) { return T(0.5) / y; });
}

template <typename T>
Tensor<T> tanh(const Tensor<T>& a) {
  return detail::unary_op(a, [](T x) { return std::tanh(x); },
                          [](T, T y) { return T(1) - y * y; });
}

// min(x, cap); zero gradient where clamped.
template <typename T>
Tensor<T> clamp_max(const Tensor<T>& a, T cap) {
  return detail::unary_op(a, [cap](T x) { return x < cap ? x : cap; },
                          [cap](T x, T) { return x < cap ? T(1) : T(0); });
}

template <typename T>
Tensor<T> clamp(const Tensor<T>& a, T lo, T hi) {
  return detail::unary_op(a, [lo, hi](T x) { return std::clamp(x, lo, hi); },
                          [lo, hi](T x, T) { return (x > lo && x < hi) ? T(1) : T(0); });
}

// Inverted dropout; the mask is drawn from `rng` in element order.
template <typename T>
Tensor<T> dropout(const Tensor<T>& a, double p, Rng& rng) {
  check(p >= 0.0 && p < 1.0, "dropout: p must be in [0,1)");
  if (p == 0.0) return a;
  const T keep_scale = T(1.0 / (1.0 - p));
  std::vector<T> mask(a.values().size());
  for (auto& m : mask) m = rng.uniform() < p ? T(0) : keep_scale;
  std::vector<T> out(a.values());
  for (size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  auto an = a.node();
  return detail::make_op<T>(a.shape(), std::move(out), {an},
                            [an = an.get(), mask = std::move(mask)](detail::Node<T>& n) {
                              an->ensure_grad();
                              for (size_t i = 0; i < n.grad.size(); ++i)
                                an->grad[i] += n.grad[i] * mask[i];
                            });
}

// ---------------------------------------------------------------------------
// Shape ops
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  check(shape_numel(shape) == a.numel(), "reshape: element count mismatch");
  std::vector<T> out(a.values());
  auto an = a.node();
  return detail::make_op<T>(std::move(shape), std::move(out), {an},
                            [an = an.get()](detail::Node<T>& n) {
                              an->ensure_grad();
                              for (size_t i = 0; i < n.grad.size(); ++i) an->grad[i] += n.grad[i];
                            });
}

// Slice of the last dimension: x[..., from:to].
template <typename T>
Tensor<T> slice_last(const Tensor<T>& a, int64_t from, int64_t to) {
  auto [rows, cols] = detail::as_matrix(a);
  check(0 <= from && from < to && to <= cols, "slice_last: bad range");
  const int64_t w = to - from;
  std::vector<T> out(size_t(rows * w));
  const T* pa = a.data();
  for (int64_t r = 0; r < rows; ++r)
    std::copy(pa + r * cols + from, pa + r * cols + to, out.begin() + r * w);
  Shape s = a.shape();
  s.back() = w;
  auto an = a.node();
  return detail::make_op<T>(std::move(s), std::move(out), {an},
                            [an = an.get(), rows, cols, from, w](detail::Node<T>& n) {
                              an->ensure_grad();
                              for (int64_t r = 0; r < rows; ++r)
                                for (int64_t j = 0; j < w; ++j)
                                  an->grad[size_t(r * cols + from + j)] +=
                                      n.grad[size_t(r * w + j)];
                            });
}

// Concatenate along the last dimension.
template <typename T>
Tensor<T> concat_last(const std::vector<Tensor<T>>& parts) {
  check(!parts.empty(), "concat_last: empty");
  const int64_t rows = detail::as_matrix(parts[0]).first;
  int64_t total = 0;
  std::vector<int64_t> widths;
  for (const auto& p : parts) {
    auto [r, c] = detail::as_matrix(p);
    check(r == rows, "concat_last: leading dims mismatch");
    widths.push_back(c);
    total += c;
  }
  std::vector<T> out(size_t(rows * total));
  int64_t off = 0;
  for (size_t k = 0; k < parts.size(); ++k) {
    const T* src = parts[k].data();
    for (int64_t r = 0; r < rows; ++r)
      std::copy(src + r * widths[k], src + (r + 1) * widths[k],
                out.begin() + r * total + off);
    off += widths[k];
  }
  Shape s = parts[0].shape();
  s.back() = total;
  std::vector<std::shared_ptr<detail::Node<T>>> parents;
  for (const auto& p : parts) parents.push_back(p.node());
  std::vector<detail::Node<T>*> raw;
  for (auto& p : parents) raw.push_back(p.get());
  return detail::make_op<T>(std::move(s), std::move(out), std::move(parents),
                            [raw, widths, rows, total](detail::Node<T>& n) {
                              int64_t off = 0;
                              for (size_t k = 0; k < raw.size(); ++k) {
                                if (raw[k]->requires_grad) {
                                  raw[k]->ensure_grad();
                                  for (int64_t r = 0; r < rows; ++r)
                                    for (int64_t j = 0; j < widths[k]; ++j)
                                      raw[k]->grad[size_t(r * widths[k] + j)] +=
                                          n.grad[size_t(r * total + off + j)];
                                }
                                off += widths[k];
                              }
                            });
}

template <typename T>
Tensor<T> concat_last(const Tensor<T>& a, const Tensor<T>& b) {
  return concat_last(std::vector<Tensor<T>>{a, b});
}

// Stack B x D tensors into B x T x D (token axis in list order).
template <typename T>
Tensor<T> stack_tokens(const std::vector<Tensor<T>>& tokens) {
  check(!tokens.empty(), "stack_tokens: empty");
  const int64_t b = tokens[0].dim(0), d = tokens[0].dim(1);
  const int64_t t = int64_t(tokens.size());
  for (const auto& tok : tokens)
    check(tok.rank() == 2 && tok.dim(0) == b && tok.dim(1) == d, "stack_tokens: shape mismatch");
  std::vector<T> out(size_t(b * t * d));
  for (int64_t ti = 0; ti < t; ++ti) {
    const T* src = tokens[size_t(ti)].data();
    for (int64_t bi = 0; bi < b; ++bi)
      std::copy(src + bi * d, src + (bi + 1) * d, out.begin() + (bi * t + ti) * d);
  }
  std::vector<std::shared_ptr<detail::Node<T>>> parents;
  for (const auto& p : tokens) parents.push_back(p.node());
  std::vector<detail::Node<T>*> raw;
  for (auto& p : parents) raw.push_back(p.get());
  return detail::make_op<T>({b, t, d}, std::move(out), std::move(parents),
                            [raw, b, t, d](detail::Node<T>& n) {
                              for (int64_t ti = 0; ti < t; ++ti) {
                                auto* p = raw[size_t(ti)];
                                if (!p->requires_grad) continue;
                                p->ensure_grad();
                                for (int64_t bi = 0; bi < b; ++bi)
                                  for (int64_t j = 0; j < d; ++j)
                                    p->grad[size_t(bi * d + j)] +=
                                        n.grad[size_t((bi * t + ti) * d + j)];
                              }
                            });
}

// Select token `index` from B x T x D -> B x D.
template <typename T>
Tensor<T> select_token(const Tensor<T>& x, int64_t index) {
  check(x.rank() == 3, "select_token: expected rank-3");
  const int64_t b = x.dim(0), t = x.dim(1), d = x.dim(2);
  check(0 <= index && index < t, "select_token: index out of range");
  std::vector<T> out(size_t(b * d));
  const T* px = x.data();
  for (int64_t bi = 0; bi < b; ++bi)
    std::copy(px + (bi * t + index) * d, px + (bi * t + index + 1) * d, out.begin() + bi * d);
  auto xn = x.node();
  return detail::make_op<T>({b, d}, std::move(out), {xn},
                            [xn = xn.get(), b, t, d, index](detail::Node<T>& n) {
                              xn->ensure_grad();
                              for (int64_t bi = 0; bi < b; ++bi)
                                for (int64_t j = 0; j < d; ++j)
                                  xn->grad[size_t((bi * t + index) * d + j)] +=
                                      n.grad[size_t(bi * d + j)];
                            });
}

// Broadcast a length-D vector to R x D.
template <typename T>
Tensor<T> repeat_row(const Tensor<T>& v, int64_t rows) {
  check(v.rank() == 1, "repeat_row: expected rank-1");
  const int64_t d = v.dim(0);
  std::vector<T> out(size_t(rows * d));
  for (int64_t r = 0; r < rows; ++r)
    std::copy(v.data(), v.data() + d, out.begin() + r * d);
  auto vn = v.node();
  return detail::make_op<T>({rows, d}, std::move(out), {vn},
                            [vn = vn.get(), rows, d](detail::Node<T>& n) {
                              vn->ensure_grad();
                              for (int64_t r = 0; r < rows; ++r)
                                for (int64_t j = 0; j < d; ++j)
                                  vn->grad[size_t(j)] += n.grad[size_t(r * d + j)];
                            });
}

// ---------------------------------------------------------------------------
// Reductions and row-wise ops
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> sum_all(const Tensor<T>& a) {
  T s = T(0);
  for (T v : a.values()) s += v;
  auto an = a.node();
  return detail::make_op<T>({1}, {s}, {an}, [an = an.get()](detail::Node<T>& n) {
    an->ensure_grad();
    for (auto& g : an->grad) g += n.grad[0];
  });
}

template <typename T>
Tensor<T> mean_all(const Tensor<T>& a) {
  const T inv = T(1) / T(a.numel());
  T s = T(0);
  for (T v : a.values()) s += v;
  s *= inv;
  auto an = a.node();
  return detail::make_op<T>({1}, {s}, {an}, [an = an.get(), inv](detail::Node<T>& n) {
    an->ensure_grad();
    for (auto& g : an->grad) g += n.grad[0] * inv;
  });
}

// Sum over the last dimension: [..., D] -> [...].
template <typename T>
Tensor<T> sum_last(const Tensor<T>& a) {
  auto [rows, cols] = detail::as_matrix(a);
  std::vector<T> out(size_t(rows), T(0));
  const T* pa = a.data();
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t j = 0; j < cols; ++j) out[size_t(r)] += pa[r * cols + j];
  Shape s(a.shape().begin(), a.shape().end() - 1);
  if (s.empty()) s = {1};
  auto an = a.node();
  return detail::make_op<T>(std::move(s), std::move(out), {an},
                            [an = an.get(), rows, cols](detail::Node<T>& n) {
                              an->ensure_grad();
                              for (int64_t r = 0; r < rows; ++r)
                                for (int64_t j = 0; j < cols; ++j)
                                  an->grad[size_t(r * cols + j)] += n.grad[size_t(r)];
                            });
}

// x[..., D] scaled per row by s[...]: out[r, :] = x[r, :] * s[r].
template <typename T>
Tensor<T> mul_rows(const Tensor<T>& x, const Tensor<T>& s) {
  auto [rows, cols] = detail::as_matrix(x);
  check(s.numel() == rows, "mul_rows: row-scale count mismatch");
  std::vector<T> out(x.values());
  const T* ps = s.data();
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t j = 0; j < cols; ++j) out[size_t(r * cols + j)] *= ps[r];
  auto xn = x.node(), sn = s.node();
  return detail::make_op<T>(x.shape(), std::move(out), {xn, sn},
                            [xn = xn.get(), sn = sn.get(), rows, cols](detail::Node<T>& n) {
                              if (xn->requires_grad) {
                                xn->ensure_grad();
                                for (int64_t r = 0; r < rows; ++r)
                                  for (int64_t j = 0; j < cols; ++j)
                                    xn->grad[size_t(r * cols + j)] +=
                                        n.grad[size_t(r * cols + j)] * sn->values[size_t(r)];
                              }
                              if (sn->requires_grad) {
                                sn->ensure_grad();
                                for (int64_t r = 0; r < rows; ++r) {
                                  T acc = T(0);
                                  for (int64_t j = 0; j < cols; ++j)
                                    acc += n.grad[size_t(r * cols + j)] *
                                           xn->values[size_t(r * cols + j)];
                                  sn->grad[size_t(r)] += acc;
                                }
                              }
                            });
}

// Multiply every element by a scalar tensor (single learnable value).
template <typename T>
Tensor<T> mul_scalar_tensor(const Tensor<T>& x, const Tensor<T>& s) {
  check(s.numel() == 1, "mul_scalar_tensor: scale must be scalar");
  const T sv = s.data()[0];
  std::vector<T> out(x.values());
  for (auto& v : out) v *= sv;
  auto xn = x.node(), sn = s.node();
  return detail::make_op<T>(x.shape(), std::move(out), {xn, sn},
                            [xn = xn.get(), sn = sn.get(), sv](detail::Node<T>& n) {
                              if (xn->requires_grad) {
                                xn->ensure_grad();
                                for (size_t i = 0; i < n.grad.size(); ++i)
                                  xn->grad[i] += n.grad[i] * sv;
                              }
                              if (sn->requires_grad) {
                                sn->ensure_grad();
                                T acc = T(0);
                                for (size_t i = 0; i < n.grad.size(); ++i)
                                  acc += n.grad[i] * xn->values[i];
                                sn->grad[0] += acc;
                              }
                            });
}

// Row-wise L2 normalization. Rows with norm below `min_norm` are a contract
// violation when `strict`, otherwise stabilized with an epsilon.
template <typename T>
Tensor<T> l2_normalize_rows(const Tensor<T>& x, bool strict = true,
                            double min_norm = 1e-12, double eps = 1e-12) {
  auto [rows, cols] = detail::as_matrix(x);
  std::vector<T> out(x.values());
  std::vector<T> inv_norm(static_cast<size_t>(rows));
  const T* px = x.data();
  for (int64_t r = 0; r < rows; ++r) {
    double sq = 0;
    for (int64_t j = 0; j < cols; ++j) sq += double(px[r * cols + j]) * double(px[r * cols + j]);
    const double norm = std::sqrt(sq);
    if (strict && norm < min_norm)
      throw ContractError("l2_normalize_rows: zero-norm row");
    inv_norm[size_t(r)] = T(1.0 / std::sqrt(sq + eps * eps));
    for (int64_t j = 0; j < cols; ++j) out[size_t(r * cols + j)] *= inv_norm[size_t(r)];
  }
  auto xn = x.node();
  return detail::make_op<T>(
      x.shape(), std::move(out), {xn},
      [xn = xn.get(), rows, cols, inv_norm = std::move(inv_norm)](detail::Node<T>& n) {
        xn->ensure_grad();
        // d/dx (x/|x|) = (g - y * (g . y)) / |x| with y the normalized row
        for (int64_t r = 0; r < rows; ++r) {
          T dot = T(0);
          for (int64_t j = 0; j < cols; ++j)
            dot += n.grad[size_t(r * cols + j)] * n.values[size_t(r * cols + j)];
          for (int64_t j = 0; j < cols; ++j)
            xn->grad[size_t(r * cols + j)] +=
                (n.grad[size_t(r * cols + j)] - n.values[size_t(r * cols + j)] * dot) *
                inv_norm[size_t(r)];
        }
      });
}

// Masked mean over the token axis: x [B,T,D], mask [B*T] in {0,1} -> [B,D].
template <typename T>
Tensor<T> masked_mean_tokens(const Tensor<T>& x, const std::vector<uint8_t>& mask) {
  check(x.rank() == 3, "masked_mean_tokens: expected rank-3");
  const int64_t b = x.dim(0), t = x.dim(1), d = x.dim(2);
  check(int64_t(mask.size()) == b * t, "masked_mean_tokens: mask size");
  std::vector<T> out(size_t(b * d), T(0));
  std::vector<T> inv_count(static_cast<size_t>(b));
  const T* px = x.data();
  for (int64_t bi = 0; bi < b; ++bi) {
    int64_t cnt = 0;
    for (int64_t ti = 0; ti < t; ++ti) {
      if (!mask[size_t(bi * t + ti)]) continue;
      ++cnt;
      for (int64_t j = 0; j < d; ++j)
        out[size_t(bi * d + j)] += px[(bi * t + ti) * d + j];
    }
    check(cnt > 0, "masked_mean_tokens: row with no valid tokens");
    inv_count[size_t(bi)] = T(1) / T(cnt);
    for (int64_t j = 0; j < d; ++j) out[size_t(bi * d + j)] *= inv_count[size_t(bi)];
  }
  auto xn = x.node();
  return detail::make_op<T>(
      {b, d}, std::move(out), {xn},
      [xn = xn.get(), b, t, d, mask, inv_count = std::move(inv_count)](detail::Node<T>& n) {
        xn->ensure_grad();
        for (int64_t bi = 0; bi < b; ++bi)
          for (int64_t ti = 0; ti < t; ++ti) {
            if (!mask[size_t(bi * t + ti)]) continue;
            for (int64_t j = 0; j < d; ++j)
              xn->grad[size_t((bi * t + ti) * d + j)] +=
                  n.grad[size_t(bi * d + j)] * inv_count[size_t(bi)];
          }
      });
}

template <typename T>
Tensor<T> mean_pool_tokens(const Tensor<T>& x) {
  check(x.rank() == 3, "mean_pool_tokens: expected rank-3");
  return masked_mean_tokens(x, std::vector<uint8_t>(size_t(x.dim(0) * x.dim(1)), 1));
}

// ---------------------------------------------------------------------------
// Matrix products
// ---------------------------------------------------------------------------

// 2D matmul with optional transposes: out = op(a) * op(b).
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, bool trans_a = false,
                 bool trans_b = false) {
  check(a.rank() == 2 && b.rank() == 2, "matmul: expected rank-2");
  const int64_t m = trans_a ? a.dim(1) : a.dim(0);
  const int64_t k = trans_a ? a.dim(0) : a.dim(1);
  const int64_t kb = trans_b ? b.dim(1) : b.dim(0);
  const int64_t n = trans_b ? b.dim(0) : b.dim(1);
  check(k == kb, "matmul: inner dimension mismatch");
  std::vector<T> out(size_t(m * n));
  detail::gemm(out.data(), a.data(), b.data(), m, k, n, trans_a, trans_b);
  auto an = a.node(), bn = b.node();
  return detail::make_op<T>(
      {m, n}, std::move(out), {an, bn},
      [an = an.get(), bn = bn.get(), m, k, n, trans_a, trans_b](detail::Node<T>& n_) {
        const T* g = n_.grad.data();
        if (an->requires_grad) {
          an->ensure_grad();
          // dA = dC * B^T (layouts adjusted for the transpose flags)
          if (!trans_a)
            detail::gemm(an->grad.data(), g, bn->values.data(), m, n, k, false, !trans_b,
                         T(1), T(1));
          else
            detail::gemm(an->grad.data(), bn->values.data(), g, k, n, m, trans_b, true,
                         T(1), T(1));
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          if (!trans_b)
            detail::gemm(bn->grad.data(), an->values.data(), g, k, m, n, !trans_a, false,
                         T(1), T(1));
          else
            detail::gemm(bn->grad.data(), g, an->values.data(), n, m, k, true, trans_a,
                         T(1), T(1));
        }
      });
}

// Batched matmul over matching leading batch dim: [B,M,K] x [B,K,N] -> [B,M,N].
template <typename T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b) {
  check(a.rank() == 3 && b.rank() == 3, "bmm: expected rank-3");
  check(a.dim(0) == b.dim(0) && a.dim(2) == b.dim(1), "bmm: shape mismatch");
  const int64_t bs = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
  std::vector<T> out(size_t(bs * m * n));
  for (int64_t i = 0; i < bs; ++i)
    detail::gemm(out.data() + i * m * n, a.data() + i * m * k, b.data() + i * k * n, m, k,
                 n, false, false);
  auto an = a.node(), bn = b.node();
  return detail::make_op<T>(
      {bs, m, n}, std::move(out), {an, bn},
      [an = an.get(), bn = bn.get(), bs, m, k, n](detail::Node<T>& n_) {
        for (int64_t i = 0; i < bs; ++i) {
          const T* g = n_.grad.data() + i * m * n;
          if (an->requires_grad) {
            an->ensure_grad();
            detail::gemm(an->grad.data() + i * m * k, g, bn->values.data() + i * k * n, m,
                         n, k, false, true, T(1), T(1));
          }
          if (bn->requires_grad) {
            bn->ensure_grad();
            detail::gemm(bn->grad.data() + i * k * n, an->values.data() + i * m * k, g, k,
                         m, n, true, false, T(1), T(1));
          }
        }
      });
}

// x [..., In] times W [In, Out] plus bias -> [..., Out].
template <typename T>
Tensor<T> affine(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b) {
  auto [rows, in] = detail::as_matrix(x);
  check(w.rank() == 2 && w.dim(0) == in, "affine: weight shape mismatch");
  const int64_t out_w = w.dim(1);
  check(b.rank() == 1 && b.dim(0) == out_w, "affine: bias shape mismatch");
  std::vector<T> out(size_t(rows * out_w));
  detail::gemm(out.data(), x.data(), w.data(), rows, in, out_w, false, false);
  const T* pb = b.data();
  for (int64_t r = 0; r < rows; ++r)
    for (int64_t j = 0; j < out_w; ++j) out[size_t(r * out_w + j)] += pb[j];
  Shape s = x.shape();
  s.back() = out_w;
  auto xn = x.node(), wn = w.node(), bn = b.node();
  return detail::make_op<T>(
      std::move(s), std::move(out), {xn, wn, bn},
      [xn = xn.get(), wn = wn.get(), bn = bn.get(), rows, in, out_w](detail::Node<T>& n) {
        const T* g = n.grad.data();
        if (xn->requires_grad) {
          xn->ensure_grad();
          detail::gemm(xn->grad.data(), g, wn->values.data(), rows, out_w, in, false, true,
                       T(1), T(1));
        }
        if (wn->requires_grad) {
          wn->ensure_grad();
          detail::gemm(wn->grad.data(), xn->values.data(), g, in, rows, out_w, true, false,
                       T(1), T(1));
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          for (int64_t r = 0; r < rows; ++r)
            for (int64_t j = 0; j < out_w; ++j) bn->grad[size_t(j)] += g[r * out_w + j];
        }
      });
}

// ---------------------------------------------------------------------------
// Normalization, softmax, losses
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias,
                     double eps = 1e-5) {
  auto [rows, cols] = detail::as_matrix(x);
  check(gain.numel() == cols && bias.numel() == cols, "layer_norm: param shape");
  std::vector<T> out(size_t(rows * cols));
  std::vector<T> xhat(size_t(rows * cols));
  std::vector<T> inv_std(static_cast<size_t>(rows));
  const T* px = x.data();
  const T* pg = gain.data();
  const T* pb = bias.data();
  for (int64_t r = 0; r < rows; ++r) {
    double mean = 0;
    for (int64_t j = 0; j < cols; ++j) mean += px[r * cols + j];
    mean /= double(cols);
    double var = 0;
    for (int64_t j = 0; j < cols; ++j) {
      const double d = double(px[r * cols + j]) - mean;
      var += d * d;
    }
    var /= double(cols);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[size_t(r)] = T(is);
    for (int64_t j = 0; j < cols; ++j) {
      const T h = T((double(px[r * cols + j]) - mean) * is);
      xhat[size_t(r * cols + j)] = h;
      out[size_t(r * cols + j)] = h * pg[j] + pb[j];
    }
  }
  auto xn = x.node(), gn = gain.node(), bn = bias.node();
  return detail::make_op<T>(
      x.shape(), std::move(out), {xn, gn, bn},
      [xn = xn.get(), gn = gn.get(), bn = bn.get(), rows, cols, xhat = std::move(xhat),
       inv_std = std::move(inv_std)](detail::Node<T>& n) {
        const T* g = n.grad.data();
        if (gn->requires_grad) {
          gn->ensure_grad();
          for (int64_t r = 0; r < rows; ++r)
            for (int64_t j = 0; j < cols; ++j)
              gn->grad[size_t(j)] += g[r * cols + j] * xhat[size_t(r * cols + j)];
        }
        if (bn->requires_grad) {
          bn->ensure_grad();
          for (int64_t r = 0; r < rows; ++r)
            for (int64_t j = 0; j < cols; ++j) bn->grad[size_t(j)] += g[r * cols + j];
        }
        if (xn->requires_grad) {
          xn->ensure_grad();
          for (int64_t r = 0; r < rows; ++r) {
            T sum_gy = T(0), sum_gyh = T(0);
            for (int64_t j = 0; j < cols; ++j) {
              const T gy = g[r * cols + j] * gn->values[size_t(j)];
              sum_gy += gy;
              sum_gyh += gy * xhat[size_t(r * cols + j)];
            }
            const T inv_n = T(1) / T(cols);
            for (int64_t j = 0; j < cols; ++j) {
              const T gy = g[r * cols + j] * gn->values[size_t(j)];
              xn->grad[size_t(r * cols + j)] +=
                  inv_std[size_t(r)] *
                  (gy - inv_n * sum_gy - xhat[size_t(r * cols + j)] * inv_n * sum_gyh);
            }
          }
        }
      });
}

template <typename T>
Tensor<T> softmax_last(const Tensor<T>& x) {
  auto [rows, cols] = detail::as_matrix(x);
  std::vector<T> out(size_t(rows * cols));
  const T* px = x.data();
  for (int64_t r = 0; r < rows; ++r) {
    T mx = px[r * cols];
    for (int64_t j = 1; j < cols; ++j) mx = std::max(mx, px[r * cols + j]);
    double denom = 0;
    for (int64_t j = 0; j < cols; ++j) {
      out[size_t(r * cols + j)] = T(std::exp(double(px[r * cols + j] - mx)));
      denom += double(out[size_t(r * cols + j)]);
    }
    const T inv = T(1.0 / denom);
    for (int64_t j = 0; j < cols; ++j) out[size_t(r * cols + j)] *= inv;
  }
  auto xn = x.node();
  return detail::make_op<T>(x.shape(), std::move(out), {xn},
                            [xn = xn.get(), rows, cols](detail::Node<T>& n) {
                              xn->ensure_grad();
                              for (int64_t r = 0; r < rows; ++r) {
                                T dot = T(0);
                                for (int64_t j = 0; j < cols; ++j)
                                  dot += n.grad[size_t(r * cols + j)] *
                                         n.values[size_t(r * cols + j)];
                                for (int64_t j = 0; j < cols; ++j)
                                  xn->grad[size_t(r * cols + j)] +=
                                      n.values[size_t(r * cols + j)] *
                                      (n.grad[size_t(r * cols + j)] - dot);
                              }
                            });
}

// Mean cross-entropy over rows of logits [R, V] against integer targets.
// Rows with target < 0 are ignored (padding); the mean runs over the rest.
template <typename T>
Tensor<T> cross_entropy(const Tensor<T>& logits, const std::vector<int>& targets) {
  auto [rows, cols] = detail::as_matrix(logits);
  check(int64_t(targets.size()) == rows, "cross_entropy: target count mismatch");
  int64_t valid = 0;
  for (int t : targets)
    if (t >= 0) {
      check(t < cols, "cross_entropy: target out of range");
      ++valid;
    }
  check(valid > 0, "cross_entropy: no valid rows");
  const T* px = logits.data();
  std::vector<T> probs(size_t(rows * cols), T(0));
  double loss = 0;
  for (int64_t r = 0; r < rows; ++r) {
    if (targets[size_t(r)] < 0) continue;
    T mx = px[r * cols];
    for (int64_t j = 1; j < cols; ++j) mx = std::max(mx, px[r * cols + j]);
    double denom = 0;
    for (int64_t j = 0; j < cols; ++j) {
      const double e = std::exp(double(px[r * cols + j] - mx));
      probs[size_t(r * cols + j)] = T(e);
      denom += e;
    }
    const double inv = 1.0 / denom;
    for (int64_t j = 0; j < cols; ++j) probs[size_t(r * cols + j)] *= T(inv);
    loss += std::log(denom) - double(px[r * cols + targets[size_t(r)]] - mx);
  }
  loss /= double(valid);
  auto xn = logits.node();
  const T inv_valid = T(1.0 / double(valid));
  return detail::make_op<T>(
      {1}, {T(loss)}, {xn},
      [xn = xn.get(), rows, cols, targets, probs = std::move(probs),
       inv_valid](detail::Node<T>& n) {
        xn->ensure_grad();
        const T g = n.grad[0] * inv_valid;
        for (int64_t r = 0; r < rows; ++r) {
          if (targets[size_t(r)] < 0) continue;
          for (int64_t j = 0; j < cols; ++j)
            xn->grad[size_t(r * cols + j)] += g * probs[size_t(r * cols + j)];
          xn->grad[size_t(r * cols + targets[size_t(r)])] -= g;
        }
      });
}

// Embedding lookup: table [V, D], ids (flattened) -> [ids..., D].
template <typename T>
Tensor<T> embedding_lookup(const Tensor<T>& table, const std::vector<int>& ids,
                           Shape leading_shape = {}) {
  check(table.rank() == 2, "embedding_lookup: table must be rank-2");
  const int64_t v = table.dim(0), d = table.dim(1);
  if (leading_shape.empty()) leading_shape = {int64_t(ids.size())};
  check(shape_numel(leading_shape) == int64_t(ids.size()), "embedding_lookup: shape mismatch");
  std::vector<T> out(ids.size() * size_t(d));
  for (size_t i = 0; i < ids.size(); ++i) {
    check(ids[i] >= 0 && ids[i] < v, "embedding_lookup: id out of range");
    std::copy(table.data() + int64_t(ids[i]) * d, table.data() + (int64_t(ids[i]) + 1) * d,
              out.begin() + int64_t(i) * d);
  }
  Shape s = leading_shape;
  s.push_back(d);
  auto tn = table.node();
  return detail::make_op<T>(std::move(s), std::move(out), {tn},
                            [tn = tn.get(), ids, d](detail::Node<T>& n) {
                              tn->ensure_grad();
                              for (size_t i = 0; i < ids.size(); ++i)
                                for (int64_t j = 0; j < d; ++j)
                                  tn->grad[size_t(int64_t(ids[i]) * d + j)] +=
                                      n.grad[size_t(int64_t(i) * d + j)];
                            });
}

// Row-wise cosine similarity between same-shaped [R, D] tensors -> [R].
template <typename T>
Tensor<T> cosine_similarity(const Tensor<T>& a, const Tensor<T>& b) {
  check(same_shape(a.shape(), b.shape()), "cosine_similarity: shape mismatch");
  auto an = l2_normalize_rows(a);
  auto bn = l2_normalize_rows(b);
  return sum_last(mul(an, bn));
}

// Mean squared error between same-shaped tensors.
template <typename T>
Tensor<T> mse(const Tensor<T>& a, const Tensor<T>& b) {
  auto d = sub(a, b);
  return mean_all(mul(d, d));
}

}  // namespace poseweave::nn
