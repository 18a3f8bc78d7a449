#include "poseweave/nn.hpp"

#include <gtest/gtest.h>

#include "gradcheck.hpp"

namespace poseweave::nn {
namespace {

using Td = Tensor<double>;
using poseweave::testing::gradcheck;
constexpr double kTol = 1e-5;

TEST(Module, RegistrationOrderAndFreeze) {
  Rng rng(1);
  Dense<float> d(4, 3, rng);
  auto named = d.named_parameters();
  ASSERT_EQ(named.size(), 2u);
  EXPECT_EQ(named[0].first, "w");
  EXPECT_EQ(named[1].first, "b");
  EXPECT_EQ(d.num_params(), 4 * 3 + 3);
  d.freeze();
  for (auto* p : d.parameters()) {
    EXPECT_FALSE(p->trainable);
    EXPECT_FALSE(p->tensor.requires_grad());
  }
}

TEST(GradCheck, DenseLayer) {
  Rng rng(2);
  Dense<double> layer(4, 3, rng);
  auto x = Td::rand_uniform({5, 4}, rng, -1, 1);
  auto w = Td::rand_uniform({5, 3}, rng, -1, 1);
  std::vector<Td*> leaves{&x};
  for (auto* p : layer.parameters()) leaves.push_back(&p->tensor);
  EXPECT_LT(gradcheck(leaves, [&] { return sum_all(mul(layer.forward(x), w)); }).max_rel_error,
            kTol);
}

TEST(GradCheck, LayerNormAndEmbeddingLayers) {
  Rng rng(3);
  LayerNorm<double> ln(6);
  auto x = Td::rand_uniform({4, 6}, rng, -2, 2);
  auto w = Td::rand_uniform({4, 6}, rng, -1, 1);
  std::vector<Td*> leaves{&x};
  for (auto* p : ln.parameters()) leaves.push_back(&p->tensor);
  EXPECT_LT(gradcheck(leaves, [&] { return sum_all(mul(ln.forward(x), w)); }).max_rel_error, kTol);

  Embedding<double> emb(9, 5, rng);
  std::vector<int> ids{1, 4, 8};
  auto we = Td::rand_uniform({3, 5}, rng, -1, 1);
  std::vector<Td*> eleaves;
  for (auto* p : emb.parameters()) eleaves.push_back(&p->tensor);
  EXPECT_LT(gradcheck(eleaves, [&] { return sum_all(mul(emb.forward(ids), we)); }).max_rel_error,
            kTol);
}

TEST(Attention, SingleTokenIsValueProjection) {
  // With W_v = W_o = I and zero q/k weights, a single token passes through
  // attention unchanged: softmax over one position is 1.
  Rng rng(4);
  const int64_t d = 6;
  auto eye = Td::leaf({d, d});
  for (int64_t i = 0; i < d; ++i) eye.mutable_data()[i * d + i] = 1.0;
  auto zero_w = Td::leaf({d, d});
  auto zero_b = Td::leaf({d});
  auto x = Td::rand_uniform({2, 1, d}, rng, -1, 1);
  auto out = multi_head_attention(x, x, zero_w, zero_b, zero_w, zero_b, eye, zero_b, eye,
                                  zero_b, 2);
  for (int64_t i = 0; i < out.numel(); ++i)
    EXPECT_NEAR(out.data()[i], x.data()[i], 1e-12);
}

TEST(Attention, RowsSumToOne) {
  Rng rng(5);
  const int64_t b = 2, tq = 3, tk = 5, d = 8;
  MultiHeadAttention<double> mha(d, 4, 0.0, rng);
  auto q = Td::rand_uniform({b, tq, d}, rng, -1, 1);
  auto kv = Td::rand_uniform({b, tk, d}, rng, -1, 1);
  std::vector<uint8_t> mask{1, 1, 1, 0, 0, 1, 0, 1, 1, 0};
  std::vector<double> probs;
  auto params = mha.parameters();
  multi_head_attention(q, kv, params[0]->tensor, params[1]->tensor, params[2]->tensor,
                       params[3]->tensor, params[4]->tensor, params[5]->tensor,
                       params[6]->tensor, params[7]->tensor, 4, &mask, false, 0.0,
                       NetCtx::eval(), &probs);
  ASSERT_EQ(probs.size(), size_t(b * 4 * tq * tk));
  for (int64_t row = 0; row < b * 4 * tq; ++row) {
    double sum = 0;
    for (int64_t j = 0; j < tk; ++j) sum += probs[size_t(row * tk + j)];
    EXPECT_NEAR(sum, 1.0, 1e-6);
  }
  // masked keys receive zero attention
  for (int64_t h = 0; h < 4; ++h)
    for (int64_t i = 0; i < tq; ++i) {
      EXPECT_EQ(probs[size_t(((0 * 4 + h) * tq + i) * tk + 3)], 0.0);
      EXPECT_EQ(probs[size_t(((0 * 4 + h) * tq + i) * tk + 4)], 0.0);
    }
}

TEST(GradCheck, MultiHeadAttentionVariants) {
  Rng rng(6);
  const int64_t b = 2, tq = 3, tk = 4, d = 8;
  MultiHeadAttention<double> mha(d, 2, 0.0, rng);
  auto q = Td::rand_uniform({b, tq, d}, rng, -1, 1);
  auto kv = Td::rand_uniform({b, tk, d}, rng, -1, 1);
  auto w = Td::rand_uniform({b, tq, d}, rng, -1, 1);
  std::vector<Td*> leaves{&q, &kv};
  for (auto* p : mha.parameters()) leaves.push_back(&p->tensor);

  // cross attention with key padding
  std::vector<uint8_t> mask{1, 1, 0, 1, 1, 0, 1, 1};
  EXPECT_LT(gradcheck(leaves,
                      [&] {
                        return sum_all(
                            mul(mha.forward(q, kv, NetCtx::eval(), &mask, false), w));
                      })
                .max_rel_error,
            kTol);

  // causal self attention
  auto wq = Td::rand_uniform({b, tq, d}, rng, -1, 1);
  std::vector<Td*> self_leaves{&q};
  for (auto* p : mha.parameters()) self_leaves.push_back(&p->tensor);
  EXPECT_LT(gradcheck(self_leaves,
                      [&] {
                        return sum_all(
                            mul(mha.forward(q, q, NetCtx::eval(), nullptr, true), wq));
                      })
                .max_rel_error,
            kTol);

  // attention-probability dropout, fixed mask per probe
  MultiHeadAttention<double> mha_drop(d, 2, 0.3, rng);
  std::vector<Td*> drop_leaves{&q, &kv};
  for (auto* p : mha_drop.parameters()) drop_leaves.push_back(&p->tensor);
  EXPECT_LT(gradcheck(drop_leaves,
                      [&] {
                        Rng drop_rng(1234);
                        NetCtx ctx{true, &drop_rng};
                        return sum_all(mul(mha_drop.forward(q, kv, ctx, nullptr, false), w));
                      })
                .max_rel_error,
            kTol);
}

TEST(GradCheck, TransformerLayers) {
  Rng rng(7);
  const int64_t b = 2, t = 3, d = 8;
  TransformerEncoderLayer<double> enc(d, 2, 12, 0.0, Activation::kGELU, rng);
  auto x = Td::rand_uniform({b, t, d}, rng, -1, 1);
  auto w = Td::rand_uniform({b, t, d}, rng, -1, 1);
  std::vector<Td*> leaves{&x};
  for (auto* p : enc.parameters()) leaves.push_back(&p->tensor);
  EXPECT_LT(
      gradcheck(leaves, [&] { return sum_all(mul(enc.forward(x, NetCtx::eval()), w)); }, 1e-5)
          .max_rel_error,
      kTol);

  TransformerDecoderLayer<double> dec(d, 2, 12, 0.0, Activation::kGELU, rng);
  auto mem = Td::rand_uniform({b, 2, d}, rng, -1, 1);
  std::vector<Td*> dleaves{&x, &mem};
  for (auto* p : dec.parameters()) dleaves.push_back(&p->tensor);
  EXPECT_LT(gradcheck(dleaves,
                      [&] { return sum_all(mul(dec.forward(x, mem, NetCtx::eval()), w)); }, 1e-5)
                .max_rel_error,
            kTol);
}

TEST(Transformer, PermutationEquivariantWithoutPositions) {
  Rng rng(8);
  const int64_t b = 1, t = 4, d = 8;
  TransformerEncoder<float> enc(d, 2, 2, 16, 0.1, Activation::kGELU, true, rng);
  auto x = Tensorf::rand_uniform({b, t, d}, rng, -1, 1);
  NoGradGuard ng;
  auto out = enc.forward(x, NetCtx::eval());
  // swap tokens 1 and 3 in the input
  auto xp = Tensorf::leaf({b, t, d});
  std::vector<int64_t> perm{0, 3, 2, 1};
  for (int64_t ti = 0; ti < t; ++ti)
    std::copy(x.data() + perm[size_t(ti)] * d, x.data() + (perm[size_t(ti)] + 1) * d,
              xp.mutable_data() + ti * d);
  auto outp = enc.forward(xp, NetCtx::eval());
  for (int64_t ti = 0; ti < t; ++ti)
    for (int64_t j = 0; j < d; ++j)
      EXPECT_NEAR(outp.data()[ti * d + j], out.data()[perm[size_t(ti)] * d + j], 1e-5)
          << "token " << ti;
}

TEST(Dropout, TrainZerosEvalIdentity) {
  Rng rng(9);
  auto x = Tensorf::full({100, 10}, 1.0f);
  Rng drng(10);
  NetCtx train{true, &drng};
  auto y = maybe_dropout(x, 0.5, train);
  int64_t zeros = 0;
  for (int64_t i = 0; i < y.numel(); ++i)
    if (y.data()[i] == 0.0f) ++zeros;
  EXPECT_GT(zeros, 350);
  EXPECT_LT(zeros, 650);
  auto z = maybe_dropout(x, 0.5, NetCtx::eval());
  for (int64_t i = 0; i < z.numel(); ++i) EXPECT_EQ(z.data()[i], 1.0f);
}

TEST(Adam, HandComputedFirstStep) {
  Rng rng(11);
  Dense<float> layer(1, 1, rng);  // convenient param holder
  auto params = layer.parameters();
  auto& p = params[0]->tensor;        // the 1x1 weight
  p.mutable_data()[0] = 0.0f;
  params[1]->tensor.mutable_data()[0] = 0.0f;
  Adam<float> adam(params, AdamConfig{.lr = 0.1});
  p.mutable_grad()[0] = 1.0f;
  adam.step();
  // bias-corrected first step: -lr * 1 / (1 + eps)
  EXPECT_NEAR(p.data()[0], -0.0999999, 1e-6);
  EXPECT_NEAR(params[1]->tensor.data()[0], 0.0f, 1e-12);  // zero grad -> unchanged
}

TEST(Adam, SkipsFrozenParams) {
  Rng rng(12);
  Dense<float> layer(2, 2, rng);
  layer.parameters()[0]->trainable = false;
  Adam<float> adam(layer.parameters(), AdamConfig{});
  EXPECT_EQ(adam.params().size(), 1u);
}

TEST(StepLr, Boundaries) {
  StepLr s{.base_lr = 2e-4, .step_size = 400, .gamma = 0.5};
  EXPECT_DOUBLE_EQ(s.lr_at(0), 2e-4);
  EXPECT_DOUBLE_EQ(s.lr_at(399), 2e-4);
  EXPECT_DOUBLE_EQ(s.lr_at(400), 1e-4);
  EXPECT_DOUBLE_EQ(s.lr_at(799), 1e-4);
  EXPECT_DOUBLE_EQ(s.lr_at(800), 5e-5);
}

TEST(Checkpoint, RoundTripBitExactWithOptimizer) {
  Rng rng(13);
  TransformerEncoderLayer<float> model(8, 2, 16, 0.1, Activation::kGELU, rng);
  Adam<float> adam(model, AdamConfig{.lr = 1e-3});

  // one step so moments are non-trivial
  Rng drng(14);
  auto x = Tensorf::rand_uniform({2, 3, 8}, rng, -1, 1);
  auto loss = mean_all(model.forward(x, NetCtx::train(drng)));
  backward(loss);
  adam.step();

  const auto hash_before = model.param_hash();
  auto dir = std::filesystem::temp_directory_path() / "pw_nn_test";
  auto path = dir / "model.ckpt";
  save_checkpoint(path, model, "test-role", {{"width", 8}}, 3, &adam);

  Rng rng2(999);
  TransformerEncoderLayer<float> restored(8, 2, 16, 0.1, Activation::kGELU, rng2);
  Adam<float> adam2(restored, AdamConfig{.lr = 1e-3});
  auto header = load_checkpoint(path, restored, &adam2);
  EXPECT_EQ(header.at("role"), "test-role");
  EXPECT_EQ(header.at("epoch").get<int>(), 3);
  EXPECT_EQ(restored.param_hash(), hash_before);
  EXPECT_EQ(adam2.step_count(), adam.step_count());
  for (size_t i = 0; i < adam.moment1().size(); ++i) {
    EXPECT_EQ(adam.moment1()[i], adam2.moment1()[i]);
    EXPECT_EQ(adam.moment2()[i], adam2.moment2()[i]);
  }
  std::filesystem::remove_all(dir);
}

TEST(Checkpoint, TrainingStepIsDeterministic) {
  auto run = [](uint64_t seed) {
    Rng rng(seed);
    TransformerEncoderLayer<float> model(8, 2, 16, 0.1, Activation::kGELU, rng);
    Adam<float> adam(model, AdamConfig{.lr = 1e-3});
    for (int step = 0; step < 3; ++step) {
      Rng drng(derive_seed(seed, "dropout", uint64_t(step)));
      Rng xrng(derive_seed(seed, "data", uint64_t(step)));
      auto x = Tensorf::rand_uniform({2, 3, 8}, xrng, -1, 1);
      adam.zero_grad();
      auto loss = mean_all(model.forward(x, NetCtx::train(drng)));
      backward(loss);
      adam.step();
    }
    return model.param_hash();
  };
  EXPECT_EQ(run(42), run(42));
  EXPECT_NE(run(42), run(43));
}

}  // namespace
}  // namespace poseweave::nn
