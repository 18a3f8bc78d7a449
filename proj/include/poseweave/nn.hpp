#pragma once

// Layers, transformer blocks, optimizer, and checkpoint IO on top of the
// autodiff tensor. Modules register parameters in a fixed order so training,
// checkpoints, and hashes are deterministic.

#include <deque>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <json.hpp>

#include "poseweave/tensor.hpp"

namespace poseweave::nn {

using nlohmann::json;

template <typename T>
struct Param {
  Tensor<T> tensor;
  bool trainable = true;
};

// Per-forward execution state. Training mode enables dropout, which draws
// from `rng`; evaluation passes are deterministic functions of the inputs.
struct NetCtx {
  bool training = false;
  Rng* rng = nullptr;

  static NetCtx eval() { return NetCtx{false, nullptr}; }
  static NetCtx train(Rng& rng) { return NetCtx{true, &rng}; }
};

template <typename T>
class Module {
 public:
  Module() = default;
  Module(const Module&) = delete;
  Module& operator=(const Module&) = delete;
  virtual ~Module() = default;

  void visit_params(const std::string& prefix,
                    const std::function<void(const std::string&, Param<T>&)>& fn) {
    for (auto& [name, p] : params_) fn(prefix.empty() ? name : prefix + "." + name, *p);
    for (auto& [name, m] : children_)
      m->visit_params(prefix.empty() ? name : prefix + "." + name, fn);
  }

  std::vector<std::pair<std::string, Param<T>*>> named_parameters() {
    std::vector<std::pair<std::string, Param<T>*>> out;
    visit_params("", [&](const std::string& n, Param<T>& p) { out.push_back({n, &p}); });
    return out;
  }

  std::vector<Param<T>*> parameters() {
    std::vector<Param<T>*> out;
    visit_params("", [&](const std::string&, Param<T>& p) { out.push_back(&p); });
    return out;
  }

  int64_t num_params() {
    int64_t n = 0;
    for (auto* p : parameters()) n += p->tensor.numel();
    return n;
  }

  // Marks every parameter non-trainable and detaches it from future graphs.
  void freeze() {
    for (auto* p : parameters()) {
      p->trainable = false;
      p->tensor.set_requires_grad(false);
    }
  }

  bool all_finite() {
    for (auto* p : parameters())
      if (!p->tensor.all_finite()) return false;
    return true;
  }

  // Little-endian float32 image of all parameters, registration order.
  std::vector<uint8_t> param_blob() {
    std::vector<uint8_t> blob;
    for (auto* p : parameters()) {
      for (T v : p->tensor.values()) {
        const float f = float(v);
        const uint8_t* b = reinterpret_cast<const uint8_t*>(&f);
        blob.insert(blob.end(), b, b + 4);
      }
    }
    return blob;
  }

  std::string param_hash() {
    auto blob = param_blob();
    return sha256_hex(blob.data(), blob.size());
  }

 protected:
  Param<T>& reg(std::string name, Tensor<T> init) {
    owned_.push_back(Param<T>{std::move(init), true});
    owned_.back().tensor.set_requires_grad(true);
    params_.push_back({std::move(name), &owned_.back()});
    return owned_.back();
  }

  void reg_child(std::string name, Module<T>& m) {
    children_.push_back({std::move(name), &m});
  }

 private:
  std::deque<Param<T>> owned_;  // deque: stable addresses
  std::vector<std::pair<std::string, Param<T>*>> params_;
  std::vector<std::pair<std::string, Module<T>*>> children_;
};

// ---------------------------------------------------------------------------
// Basic layers
// ---------------------------------------------------------------------------

template <typename T>
class Dense : public Module<T> {
 public:
  Dense(int64_t in, int64_t out, Rng& rng)
      : in_(in),
        out_(out),
        w_(this->reg("w", Tensor<T>::rand_uniform({in, out}, rng, T(-1.0 / std::sqrt(double(in))),
                                                  T(1.0 / std::sqrt(double(in)))))),
        b_(this->reg("b", Tensor<T>::rand_uniform({out}, rng, T(-1.0 / std::sqrt(double(in))),
                                                  T(1.0 / std::sqrt(double(in)))))) {}

  Tensor<T> forward(const Tensor<T>& x) { return affine(x, w_.tensor, b_.tensor); }

  int64_t in_width() const { return in_; }
  int64_t out_width() const { return out_; }
  Param<T>& weight() { return w_; }
  Param<T>& bias() { return b_; }

 private:
  int64_t in_, out_;
  Param<T>& w_;
  Param<T>& b_;
};

template <typename T>
class LayerNorm : public Module<T> {
 public:
  explicit LayerNorm(int64_t width, double eps = 1e-5)
      : eps_(eps),
        gain_(this->reg("gain", Tensor<T>::full({width}, T(1)))),
        bias_(this->reg("bias", Tensor<T>::full({width}, T(0)))) {}

  Tensor<T> forward(const Tensor<T>& x) { return layer_norm(x, gain_.tensor, bias_.tensor, eps_); }

 private:
  double eps_;
  Param<T>& gain_;
  Param<T>& bias_;
};

template <typename T>
class Embedding : public Module<T> {
 public:
  Embedding(int64_t vocab, int64_t width, Rng& rng)
      : vocab_(vocab),
        table_(this->reg("table", Tensor<T>::randn({vocab, width}, rng, T(0.02)))) {}

  Tensor<T> forward(const std::vector<int>& ids, Shape leading_shape = {}) {
    return embedding_lookup(table_.tensor, ids, std::move(leading_shape));
  }

  int64_t vocab_size() const { return vocab_; }

 private:
  int64_t vocab_;
  Param<T>& table_;
};

template <typename T>
Tensor<T> maybe_dropout(const Tensor<T>& x, double p, const NetCtx& ctx) {
  if (!ctx.training || p <= 0.0) return x;
  check(ctx.rng != nullptr, "dropout in training mode requires an rng");
  return dropout(x, p, *ctx.rng);
}

// ---------------------------------------------------------------------------
// Fused multi-head attention
// ---------------------------------------------------------------------------

namespace detail {

template <typename T>
using StrideMap =
    Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>, 0,
               Eigen::OuterStride<>>;
template <typename T>
using CStrideMap =
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>, 0,
               Eigen::OuterStride<>>;

}  // namespace detail

// Scaled dot-product attention over `heads` heads with projection weights.
// q: [B,Tq,D], kv: [B,Tk,D]. key_mask (optional): B*Tk flags, 0 = padding.
// causal masks position i from keys j > i (requires Tq == Tk).
template <typename T>
Tensor<T> multi_head_attention(const Tensor<T>& q, const Tensor<T>& kv, const Tensor<T>& wq,
                               const Tensor<T>& bq, const Tensor<T>& wk, const Tensor<T>& bk,
                               const Tensor<T>& wv, const Tensor<T>& bv, const Tensor<T>& wo,
                               const Tensor<T>& bo, int heads,
                               const std::vector<uint8_t>* key_mask = nullptr,
                               bool causal = false, double attn_dropout = 0.0,
                               const NetCtx& ctx = NetCtx::eval(),
                               std::vector<T>* attn_probs_out = nullptr) {
  check(q.rank() == 3 && kv.rank() == 3, "mha: expected rank-3 inputs");
  const int64_t b = q.dim(0), tq = q.dim(1), d = q.dim(2);
  const int64_t tk = kv.dim(1);
  check(kv.dim(0) == b && kv.dim(2) == d, "mha: q/kv shape mismatch");
  check(d % heads == 0, "mha: width not divisible by heads");
  if (causal) check(tq == tk, "mha: causal attention requires square attention");
  if (key_mask) check(int64_t(key_mask->size()) == b * tk, "mha: key_mask size");
  const int64_t h = heads, dh = d / heads;
  const T scale = T(1.0 / std::sqrt(double(dh)));
  const T neg_inf = T(-1e30);

  auto project = [&](const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias,
                     int64_t t) {
    std::vector<T> out(size_t(b * t * d));
    detail::gemm(out.data(), x.data(), w.data(), b * t, d, d, false, false);
    const T* pb = bias.data();
    for (int64_t r = 0; r < b * t; ++r)
      for (int64_t j = 0; j < d; ++j) out[size_t(r * d + j)] += pb[j];
    return out;
  };
  std::vector<T> qp = project(q, wq, bq, tq);
  std::vector<T> kp = project(kv, wk, bk, tk);
  std::vector<T> vp = project(kv, wv, bv, tk);

  const bool use_drop = ctx.training && attn_dropout > 0.0;
  if (use_drop) check(ctx.rng != nullptr, "mha: attention dropout requires rng");
  std::vector<T> attn(size_t(b * h * tq * tk));       // post-softmax
  std::vector<T> drop_scale;                          // per-attn-entry factor
  if (use_drop) drop_scale.assign(attn.size(), T(0));
  const T keep = use_drop ? T(1.0 / (1.0 - attn_dropout)) : T(1);

  std::vector<T> ctx_out(size_t(b * tq * d));
  std::vector<T> scores(size_t(tq * tk));
  for (int64_t bi = 0; bi < b; ++bi) {
    for (int64_t hi = 0; hi < h; ++hi) {
      detail::CStrideMap<T> Q(qp.data() + bi * tq * d + hi * dh, tq, dh,
                              Eigen::OuterStride<>(d));
      detail::CStrideMap<T> K(kp.data() + bi * tk * d + hi * dh, tk, dh,
                              Eigen::OuterStride<>(d));
      detail::CStrideMap<T> V(vp.data() + bi * tk * d + hi * dh, tk, dh,
                              Eigen::OuterStride<>(d));
      detail::EMap<T> S(scores.data(), tq, tk);
      S.noalias() = (Q * K.transpose()) * scale;
      for (int64_t i = 0; i < tq; ++i)
        for (int64_t j = 0; j < tk; ++j) {
          if ((key_mask && !(*key_mask)[size_t(bi * tk + j)]) || (causal && j > i))
            S(i, j) = neg_inf;
        }
      T* arow = attn.data() + ((bi * h + hi) * tq) * tk;
      for (int64_t i = 0; i < tq; ++i) {
        T mx = S(i, 0);
        for (int64_t j = 1; j < tk; ++j) mx = std::max(mx, S(i, j));
        check(mx > neg_inf, "mha: attention row fully masked");
        double denom = 0;
        for (int64_t j = 0; j < tk; ++j) {
          const double e = std::exp(double(S(i, j) - mx));
          arow[i * tk + j] = T(e);
          denom += e;
        }
        const T inv = T(1.0 / denom);
        for (int64_t j = 0; j < tk; ++j) arow[i * tk + j] *= inv;
      }
      if (use_drop) {
        T* dsc = drop_scale.data() + ((bi * h + hi) * tq) * tk;
        for (int64_t i = 0; i < tq * tk; ++i)
          dsc[i] = ctx.rng->uniform() < attn_dropout ? T(0) : keep;
      }
      // context = attn (optionally dropped) * V
      detail::StrideMap<T> O(ctx_out.data() + bi * tq * d + hi * dh, tq, dh,
                             Eigen::OuterStride<>(d));
      if (use_drop) {
        Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> A(tq, tk);
        const T* dsc = drop_scale.data() + ((bi * h + hi) * tq) * tk;
        for (int64_t i = 0; i < tq; ++i)
          for (int64_t j = 0; j < tk; ++j) A(i, j) = arow[i * tk + j] * dsc[i * tk + j];
        O.noalias() = A * V;
      } else {
        detail::CStrideMap<T> A(arow, tq, tk, Eigen::OuterStride<>(tk));
        O.noalias() = A * V;
      }
    }
  }

  std::vector<T> out(size_t(b * tq * d));
  detail::gemm(out.data(), ctx_out.data(), wo.data(), b * tq, d, d, false, false);
  const T* pbo = bo.data();
  for (int64_t r = 0; r < b * tq; ++r)
    for (int64_t j = 0; j < d; ++j) out[size_t(r * d + j)] += pbo[j];
  if (attn_probs_out) *attn_probs_out = attn;  // [B,H,Tq,Tk], pre-dropout

  auto qn = q.node(), kvn = kv.node();
  auto wqn = wq.node(), bqn = bq.node(), wkn = wk.node(), bkn = bk.node();
  auto wvn = wv.node(), bvn = bv.node(), won = wo.node(), bon = bo.node();

  auto backward = [qn = qn.get(), kvn = kvn.get(), wqn = wqn.get(), bqn = bqn.get(),
                   wkn = wkn.get(), bkn = bkn.get(), wvn = wvn.get(), bvn = bvn.get(),
                   won = won.get(), bon = bon.get(), b, tq, tk, d, h, dh, scale,
                   qp = std::move(qp), kp = std::move(kp), vp = std::move(vp),
                   attn = std::move(attn), drop_scale = std::move(drop_scale),
                   ctx_out = std::move(ctx_out), use_drop](detail::Node<T>& n) {
    const T* g = n.grad.data();  // [B*Tq, D]
    // output projection
    if (won->requires_grad) {
      won->ensure_grad();
      detail::gemm(won->grad.data(), ctx_out.data(), g, d, b * tq, d, true, false, T(1), T(1));
    }
    if (bon->requires_grad) {
      bon->ensure_grad();
      for (int64_t r = 0; r < b * tq; ++r)
        for (int64_t j = 0; j < d; ++j) bon->grad[size_t(j)] += g[r * d + j];
    }
    std::vector<T> d_ctx(size_t(b * tq * d));
    detail::gemm(d_ctx.data(), g, won->values.data(), b * tq, d, d, false, true);

    std::vector<T> dqp(size_t(b * tq * d), T(0));
    std::vector<T> dkp(size_t(b * tk * d), T(0));
    std::vector<T> dvp(size_t(b * tk * d), T(0));
    Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> dA(tq, tk), dS(tq, tk);
    for (int64_t bi = 0; bi < b; ++bi) {
      for (int64_t hi = 0; hi < h; ++hi) {
        detail::CStrideMap<T> Q(qp.data() + bi * tq * d + hi * dh, tq, dh,
                                Eigen::OuterStride<>(d));
        detail::CStrideMap<T> K(kp.data() + bi * tk * d + hi * dh, tk, dh,
                                Eigen::OuterStride<>(d));
        detail::CStrideMap<T> V(vp.data() + bi * tk * d + hi * dh, tk, dh,
                                Eigen::OuterStride<>(d));
        detail::CStrideMap<T> dO(d_ctx.data() + bi * tq * d + hi * dh, tq, dh,
                                 Eigen::OuterStride<>(d));
        const T* arow = attn.data() + ((bi * h + hi) * tq) * tk;
        const T* dsc = use_drop ? drop_scale.data() + ((bi * h + hi) * tq) * tk : nullptr;

        // dA_used = dO * V^T ; dV += A_used^T * dO
        dA.noalias() = dO * V.transpose();
        {
          detail::StrideMap<T> dVm(dvp.data() + bi * tk * d + hi * dh, tk, dh,
                                   Eigen::OuterStride<>(d));
          Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> Aused(tq, tk);
          for (int64_t i = 0; i < tq; ++i)
            for (int64_t j = 0; j < tk; ++j) {
              T a = arow[i * tk + j];
              if (use_drop) a *= dsc[i * tk + j];
              Aused(i, j) = a;
            }
          dVm.noalias() += Aused.transpose() * dO;
        }
        // through dropout, then softmax
        for (int64_t i = 0; i < tq; ++i) {
          T dot = T(0);
          for (int64_t j = 0; j < tk; ++j) {
            T da = dA(i, j);
            if (use_drop) da *= dsc[i * tk + j];
            dA(i, j) = da;
            dot += da * arow[i * tk + j];
          }
          for (int64_t j = 0; j < tk; ++j)
            dS(i, j) = arow[i * tk + j] * (dA(i, j) - dot) * scale;
        }
        detail::StrideMap<T> dQm(dqp.data() + bi * tq * d + hi * dh, tq, dh,
                                 Eigen::OuterStride<>(d));
        detail::StrideMap<T> dKm(dkp.data() + bi * tk * d + hi * dh, tk, dh,
                                 Eigen::OuterStride<>(d));
        dQm.noalias() += dS * K;
        dKm.noalias() += dS.transpose() * Q;
      }
    }

    auto back_projection = [&](detail::Node<T>* x, detail::Node<T>* w, detail::Node<T>* bias,
                               const std::vector<T>& dproj, const std::vector<T>& xvals,
                               int64_t t) {
      if (w->requires_grad) {
        w->ensure_grad();
        detail::gemm(w->grad.data(), xvals.data(), dproj.data(), d, b * t, d, true, false,
                     T(1), T(1));
      }
      if (bias->requires_grad) {
        bias->ensure_grad();
        for (int64_t r = 0; r < b * t; ++r)
          for (int64_t j = 0; j < d; ++j) bias->grad[size_t(j)] += dproj[size_t(r * d + j)];
      }
      if (x->requires_grad) {
        x->ensure_grad();
        detail::gemm(x->grad.data(), dproj.data(), w->values.data(), b * t, d, d, false,
                     true, T(1), T(1));
      }
    };
    back_projection(qn, wqn, bqn, dqp, qn->values, tq);
    back_projection(kvn, wkn, bkn, dkp, kvn->values, tk);
    back_projection(kvn, wvn, bvn, dvp, kvn->values, tk);
  };

  return detail::make_op<T>({b, tq, d}, std::move(out),
                            {qn, kvn, wqn, bqn, wkn, bkn, wvn, bvn, won, bon},
                            std::move(backward));
}

template <typename T>
class MultiHeadAttention : public Module<T> {
 public:
  MultiHeadAttention(int64_t width, int heads, double attn_dropout, Rng& rng)
      : heads_(heads),
        attn_dropout_(attn_dropout),
        wq_(this->reg("wq", init_w(width, rng))),
        bq_(this->reg("bq", Tensor<T>::full({width}, T(0)))),
        wk_(this->reg("wk", init_w(width, rng))),
        bk_(this->reg("bk", Tensor<T>::full({width}, T(0)))),
        wv_(this->reg("wv", init_w(width, rng))),
        bv_(this->reg("bv", Tensor<T>::full({width}, T(0)))),
        wo_(this->reg("wo", init_w(width, rng))),
        bo_(this->reg("bo", Tensor<T>::full({width}, T(0)))) {
    check(width % heads == 0, "MultiHeadAttention: width must divide by heads");
  }

  Tensor<T> forward(const Tensor<T>& q, const Tensor<T>& kv, const NetCtx& ctx,
                    const std::vector<uint8_t>* key_mask = nullptr, bool causal = false) {
    return multi_head_attention(q, kv, wq_.tensor, bq_.tensor, wk_.tensor, bk_.tensor,
                                wv_.tensor, bv_.tensor, wo_.tensor, bo_.tensor, heads_,
                                key_mask, causal, attn_dropout_, ctx);
  }

 private:
  static Tensor<T> init_w(int64_t width, Rng& rng) {
    const T k = T(1.0 / std::sqrt(double(width)));
    return Tensor<T>::rand_uniform({width, width}, rng, -k, k);
  }
  int heads_;
  double attn_dropout_;
  Param<T>&wq_, &bq_, &wk_, &bk_, &wv_, &bv_, &wo_, &bo_;
};

enum class Activation { kReLU, kGELU };

template <typename T>
Tensor<T> activate(const Tensor<T>& x, Activation a) {
  return a == Activation::kReLU ? relu(x) : gelu(x);
}

// Post-norm transformer encoder layer:
//   x = LN(x + Drop(SelfAttn(x)));  x = LN(x + Drop(FF(x)))
template <typename T>
class TransformerEncoderLayer : public Module<T> {
 public:
  TransformerEncoderLayer(int64_t width, int heads, int64_t ff_width, double dropout_p,
                          Activation act, Rng& rng)
      : dropout_p_(dropout_p),
        act_(act),
        attn_(width, heads, dropout_p, rng),
        ff1_(width, ff_width, rng),
        ff2_(ff_width, width, rng),
        ln1_(width),
        ln2_(width) {
    this->reg_child("attn", attn_);
    this->reg_child("ff1", ff1_);
    this->reg_child("ff2", ff2_);
    this->reg_child("ln1", ln1_);
    this->reg_child("ln2", ln2_);
  }

  Tensor<T> forward(const Tensor<T>& x, const NetCtx& ctx,
                    const std::vector<uint8_t>* key_mask = nullptr) {
    auto a = maybe_dropout(attn_.forward(x, x, ctx, key_mask, false), dropout_p_, ctx);
    auto h = ln1_.forward(add(x, a));
    auto f = ff2_.forward(
        maybe_dropout(activate(ff1_.forward(h), act_), dropout_p_, ctx));
    return ln2_.forward(add(h, maybe_dropout(f, dropout_p_, ctx)));
  }

 private:
  double dropout_p_;
  Activation act_;
  MultiHeadAttention<T> attn_;
  Dense<T> ff1_, ff2_;
  LayerNorm<T> ln1_, ln2_;
};

template <typename T>
class TransformerEncoder : public Module<T> {
 public:
  TransformerEncoder(int64_t width, int heads, int layers, int64_t ff_width,
                     double dropout_p, Activation act, bool final_norm, Rng& rng)
      : final_ln_(width) {
    for (int i = 0; i < layers; ++i) {
      layers_.push_back(std::make_unique<TransformerEncoderLayer<T>>(width, heads, ff_width,
                                                                     dropout_p, act, rng));
      this->reg_child("layer" + std::to_string(i), *layers_.back());
    }
    use_final_ln_ = final_norm;
    if (final_norm) this->reg_child("final_ln", final_ln_);
  }

  Tensor<T> forward(const Tensor<T>& x, const NetCtx& ctx,
                    const std::vector<uint8_t>* key_mask = nullptr) {
    Tensor<T> h = x;
    for (auto& l : layers_) h = l->forward(h, ctx, key_mask);
    if (use_final_ln_) h = final_ln_.forward(h);
    return h;
  }

 private:
  std::vector<std::unique_ptr<TransformerEncoderLayer<T>>> layers_;
  LayerNorm<T> final_ln_;
  bool use_final_ln_ = false;
};

// Post-norm transformer decoder layer: causal self-attention, cross-attention
// over the conditioning memory, then the feed-forward block.
template <typename T>
class TransformerDecoderLayer : public Module<T> {
 public:
  TransformerDecoderLayer(int64_t width, int heads, int64_t ff_width, double dropout_p,
                          Activation act, Rng& rng)
      : dropout_p_(dropout_p),
        act_(act),
        self_attn_(width, heads, dropout_p, rng),
        cross_attn_(width, heads, dropout_p, rng),
        ff1_(width, ff_width, rng),
        ff2_(ff_width, width, rng),
        ln1_(width),
        ln2_(width),
        ln3_(width) {
    this->reg_child("self_attn", self_attn_);
    this->reg_child("cross_attn", cross_attn_);
    this->reg_child("ff1", ff1_);
    this->reg_child("ff2", ff2_);
    this->reg_child("ln1", ln1_);
    this->reg_child("ln2", ln2_);
    this->reg_child("ln3", ln3_);
  }

  Tensor<T> forward(const Tensor<T>& x, const Tensor<T>& memory, const NetCtx& ctx,
                    const std::vector<uint8_t>* self_mask = nullptr,
                    const std::vector<uint8_t>* memory_mask = nullptr) {
    auto a = maybe_dropout(self_attn_.forward(x, x, ctx, self_mask, true), dropout_p_, ctx);
    auto h = ln1_.forward(add(x, a));
    auto c = maybe_dropout(cross_attn_.forward(h, memory, ctx, memory_mask, false),
                           dropout_p_, ctx);
    h = ln2_.forward(add(h, c));
    auto f = ff2_.forward(maybe_dropout(activate(ff1_.forward(h), act_), dropout_p_, ctx));
    return ln3_.forward(add(h, maybe_dropout(f, dropout_p_, ctx)));
  }

 private:
  double dropout_p_;
  Activation act_;
  MultiHeadAttention<T> self_attn_, cross_attn_;
  Dense<T> ff1_, ff2_;
  LayerNorm<T> ln1_, ln2_, ln3_;
};

// ---------------------------------------------------------------------------
// Contrastive loss
// ---------------------------------------------------------------------------

// Temperature-scaled InfoNCE over a batch: row i of y must rank z_i above
// every other z_j under cosine similarity. Zero-norm rows are a contract
// violation (raised by the row normalization).
template <typename T>
Tensor<T> info_nce(const Tensor<T>& y, const Tensor<T>& z, const Tensor<T>& gamma) {
  check(y.rank() == 2 && z.rank() == 2, "info_nce: expected rank-2 inputs");
  check(y.dim(0) == z.dim(0) && y.dim(1) == z.dim(1), "info_nce: shape mismatch");
  check(y.dim(0) >= 1, "info_nce: empty batch");
  auto sims = matmul(l2_normalize_rows(y), l2_normalize_rows(z), false, true);
  auto logits = mul_scalar_tensor(sims, gamma);
  std::vector<int> targets(size_t(y.dim(0)));
  for (size_t i = 0; i < targets.size(); ++i) targets[i] = int(i);
  return cross_entropy(logits, targets);
}

// Learnable contrastive temperature, parameterized as exp(g) with g
// initialized to ln 10 and the value capped at 100.
template <typename T>
class Temperature : public Module<T> {
 public:
  Temperature() : g_(this->reg("g", Tensor<T>::full({1}, T(std::log(10.0))))) {}

  Tensor<T> gamma() { return clamp_max(exp(g_.tensor), T(100)); }
  T value() { return std::min(std::exp(g_.tensor.data()[0]), T(100)); }

 private:
  Param<T>& g_;
};

// ---------------------------------------------------------------------------
// Optimizer and schedule
// ---------------------------------------------------------------------------

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
};

template <typename T>
class Adam {
 public:
  Adam(std::vector<Param<T>*> params, AdamConfig cfg) : cfg_(cfg), lr_(cfg.lr) {
    for (auto* p : params)
      if (p->trainable) params_.push_back(p);
    m_.resize(params_.size());
    v_.resize(params_.size());
    for (size_t i = 0; i < params_.size(); ++i) {
      m_[i].assign(size_t(params_[i]->tensor.numel()), T(0));
      v_[i].assign(size_t(params_[i]->tensor.numel()), T(0));
    }
  }

  Adam(Module<T>& m, AdamConfig cfg) : Adam(m.parameters(), cfg) {}

  void set_lr(double lr) { lr_ = lr; }
  double lr() const { return lr_; }
  int64_t step_count() const { return t_; }

  void zero_grad() {
    for (auto* p : params_) p->tensor.zero_grad();
  }

  // Textbook Adam with bias correction; weight decay adds an L2 term to the
  // gradient. Frozen parameters were excluded at construction.
  void step() {
    ++t_;
    const T b1 = T(cfg_.beta1), b2 = T(cfg_.beta2);
    const double bc1 = 1.0 - std::pow(cfg_.beta1, double(t_));
    const double bc2 = 1.0 - std::pow(cfg_.beta2, double(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i]->tensor;
      const auto& grad = p.grad();
      T* w = p.mutable_data();
      auto& m = m_[i];
      auto& v = v_[i];
      for (size_t j = 0; j < grad.size(); ++j) {
        T g = grad[j];
        if (cfg_.weight_decay != 0.0) g += T(cfg_.weight_decay) * w[j];
        m[j] = b1 * m[j] + (T(1) - b1) * g;
        v[j] = b2 * v[j] + (T(1) - b2) * g * g;
        const double mhat = double(m[j]) / bc1;
        const double vhat = double(v[j]) / bc2;
        w[j] -= T(lr_ * mhat / (std::sqrt(vhat) + cfg_.eps));
      }
    }
  }

  // Optimizer state image for exact training resumption.
  json state_to_json() const {
    json j;
    j["t"] = t_;
    j["lr"] = lr_;
    return j;
  }
  void state_from_json(const json& j) {
    t_ = j.at("t").get<int64_t>();
    lr_ = j.at("lr").get<double>();
  }
  std::vector<std::vector<T>>& moment1() { return m_; }
  std::vector<std::vector<T>>& moment2() { return v_; }
  const std::vector<Param<T>*>& params() const { return params_; }

 private:
  AdamConfig cfg_;
  double lr_;
  int64_t t_ = 0;
  std::vector<Param<T>*> params_;
  std::vector<std::vector<T>> m_, v_;
};

// Multiplies the base rate by gamma every `step_size` epochs.
struct StepLr {
  double base_lr = 1e-3;
  int64_t step_size = 400;
  double gamma = 0.5;

  double lr_at(int64_t epoch) const {
    return base_lr * std::pow(gamma, double(epoch / step_size));
  }
};

// ---------------------------------------------------------------------------
// Checkpoints: JSON header + little-endian float32 blob, order given by the
// header. Optionally carries Adam state for bit-exact resumption.
// ---------------------------------------------------------------------------

inline constexpr uint32_t kCheckpointVersion = 1;

inline void save_checkpoint(const std::filesystem::path& path, Module<float>& module,
                            const std::string& role, const json& hyper, int64_t epoch = 0,
                            Adam<float>* adam = nullptr, const json& extra = json::object()) {
  json header;
  header["format_version"] = kCheckpointVersion;
  header["role"] = role;
  header["hyper"] = hyper;
  header["epoch"] = epoch;
  header["extra"] = extra;
  std::vector<float> blob;
  json tensors = json::array();
  for (auto& [name, p] : module.named_parameters()) {
    json t;
    t["name"] = name;
    t["shape"] = p->tensor.shape();
    t["offset"] = blob.size();
    t["trainable"] = p->trainable;
    tensors.push_back(t);
    blob.insert(blob.end(), p->tensor.values().begin(), p->tensor.values().end());
  }
  header["tensors"] = tensors;
  if (adam) {
    json opt = adam->state_to_json();
    opt["moment_offset"] = blob.size();
    for (auto& m : adam->moment1()) blob.insert(blob.end(), m.begin(), m.end());
    for (auto& v : adam->moment2()) blob.insert(blob.end(), v.begin(), v.end());
    header["optimizer"] = opt;
  }
  const std::string htext = header.dump();
  std::vector<uint8_t> bytes;
  const char magic[8] = {'P', 'W', 'C', 'K', 'P', 'T', '0', '1'};
  bytes.insert(bytes.end(), magic, magic + 8);
  uint64_t hlen = htext.size();
  const uint8_t* hl = reinterpret_cast<const uint8_t*>(&hlen);
  bytes.insert(bytes.end(), hl, hl + 8);
  bytes.insert(bytes.end(), htext.begin(), htext.end());
  const uint8_t* bl = reinterpret_cast<const uint8_t*>(blob.data());
  bytes.insert(bytes.end(), bl, bl + blob.size() * 4);
  write_file_bytes(path, bytes.data(), bytes.size());
}

// Loads parameters (and optional optimizer state) into an already-constructed
// module whose architecture must match the header. Returns the header.
inline json load_checkpoint(const std::filesystem::path& path, Module<float>& module,
                            Adam<float>* adam = nullptr) {
  auto bytes = read_file_bytes(path);
  check(bytes.size() >= 16 && std::memcmp(bytes.data(), "PWCKPT01", 8) == 0,
        "load_checkpoint: bad magic: " + path.string());
  uint64_t hlen;
  std::memcpy(&hlen, bytes.data() + 8, 8);
  check(bytes.size() >= 16 + hlen, "load_checkpoint: truncated header");
  json header = json::parse(std::string(bytes.begin() + 16, bytes.begin() + 16 + hlen));
  check(header.at("format_version").get<uint32_t>() == kCheckpointVersion,
        "load_checkpoint: unsupported version");
  const float* blob = reinterpret_cast<const float*>(bytes.data() + 16 + hlen);
  const size_t blob_count = (bytes.size() - 16 - hlen) / 4;

  auto named = module.named_parameters();
  const auto& tensors = header.at("tensors");
  check(tensors.size() == named.size(), "load_checkpoint: parameter count mismatch");
  for (size_t i = 0; i < named.size(); ++i) {
    const auto& t = tensors[i];
    check(t.at("name").get<std::string>() == named[i].first,
          "load_checkpoint: parameter name mismatch at " + named[i].first);
    const auto shape = t.at("shape").get<std::vector<int64_t>>();
    check(shape == named[i].second->tensor.shape(),
          "load_checkpoint: shape mismatch at " + named[i].first);
    const size_t off = t.at("offset").get<size_t>();
    const size_t count = size_t(named[i].second->tensor.numel());
    check(off + count <= blob_count, "load_checkpoint: blob out of range");
    std::copy(blob + off, blob + off + count, named[i].second->tensor.mutable_data());
    named[i].second->trainable = t.at("trainable").get<bool>();
    if (!named[i].second->trainable) named[i].second->tensor.set_requires_grad(false);
  }
  if (adam && header.contains("optimizer")) {
    adam->state_from_json(header.at("optimizer"));
    size_t off = header.at("optimizer").at("moment_offset").get<size_t>();
    for (auto& m : adam->moment1()) {
      check(off + m.size() <= blob_count, "load_checkpoint: optimizer blob out of range");
      std::copy(blob + off, blob + off + m.size(), m.begin());
      off += m.size();
    }
    for (auto& v : adam->moment2()) {
      check(off + v.size() <= blob_count, "load_checkpoint: optimizer blob out of range");
      std::copy(blob + off, blob + off + v.size(), v.begin());
      off += v.size();
    }
  }
  return header;
}

}  // namespace poseweave::nn
