#include "poseweave/tensor.hpp"

#include <gtest/gtest.h>

#include "gradcheck.hpp"

namespace poseweave::nn {
namespace {

using Td = Tensor<double>;
using poseweave::testing::gradcheck;

Td randt(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  return Td::rand_uniform(std::move(shape), rng, lo, hi);
}

constexpr double kTol = 1e-5;

TEST(Tensor, BasicsAndExactGradient) {
  Rng rng(1);
  auto x = randt({3, 4}, rng);
  x.set_requires_grad(true);
  auto loss = sum_all(mul(x, x));
  backward(loss);
  for (int64_t i = 0; i < x.numel(); ++i)
    EXPECT_DOUBLE_EQ(x.grad()[size_t(i)], 2.0 * x.data()[i]);
  // second backward on the same graph accumulates a second clean pass
  backward(loss);
  for (int64_t i = 0; i < x.numel(); ++i)
    EXPECT_DOUBLE_EQ(x.grad()[size_t(i)], 4.0 * x.data()[i]);
}

TEST(Tensor, NoGradBuildsNoGraph) {
  Rng rng(2);
  auto x = randt({2, 2}, rng);
  x.set_requires_grad(true);
  NoGradGuard guard;
  auto y = mul(x, x);
  EXPECT_FALSE(y.requires_grad());
}

TEST(Tensor, FrozenLeafGetsNoGradient) {
  Rng rng(3);
  auto x = randt({2, 3}, rng);
  auto w = randt({2, 3}, rng);
  x.set_requires_grad(true);
  w.set_requires_grad(false);
  auto loss = sum_all(mul(x, w));
  backward(loss);
  EXPECT_TRUE(w.grad().empty() || *std::max_element(w.grad().begin(), w.grad().end()) == 0.0);
}

TEST(GradCheck, ElementwiseOps) {
  Rng rng(10);
  auto x = randt({4, 5}, rng, -2, 2);
  auto y = randt({4, 5}, rng, -2, 2);
  auto w = randt({4, 5}, rng, 0.1, 2.0);  // positive for log/sqrt

  auto weights = randt({4, 5}, rng);  // fixed projection to scalarize
  auto project = [&](Tensor<double> t) { return sum_all(mul(t, weights)); };

  EXPECT_LT(gradcheck({&x, &y}, [&] { return project(add(x, y)); }).max_rel_error, kTol);
  EXPECT_LT(gradcheck({&x, &y}, [&] { return project(sub(x, y)); }).max_rel_error, kTol);
  EXPECT_LT(gradcheck({&x, &y}, [&] { return project(mul(x, y)); }).max_rel_error, kTol);
  EXPECT_LT(gradcheck({&x}, [&] { return project(add_scalar(x, 1.7)); }).max_rel_error, kTol);
  EXPECT_LT(gradcheck({&x}, [&] { return project(mul_scalar(x, -2.3)); }).max_rel_error, kTol);
  EXPECT_LT(gradcheck({&x}, [&] { return project(leaky_relu(x, 0.01)); }).max_rel_error, kTol);
  EXPECT_LT(gradcheck({&x}, [&] { return project(sigmoid(x)); }).max_rel_error, kTol);
  EXPECT_LT(gradcheck({&x}, [&] { return project(gelu(x)); }).max_rel_error, kTol);
  EXPECT_LT(gradcheck({&x}, [&] { return project(tanh(x)); }).max_rel_error, kTol);
  EXPECT_LT(gradcheck({&x}, [&] { return project(exp(x)); }).max_rel_error, kTol);
  EXPECT_LT(gradcheck({&w}, [&] { return project(log(w)); }).max_rel_error, kTol);
  EXPECT_LT(gradcheck({&w}, [&] { return project(sqrt(w)); }).max_rel_error, kTol);
}

TEST(GradCheck, ReluAwayFromKink) {
  Rng rng(11);
  // keep probe points away from 0 so central differences are valid
  auto x = randt({4, 5}, rng, 0.2, 2.0);
  auto y = randt({4, 5}, rng, -2.0, -0.2);
  auto w = randt({4, 5}, rng);
  auto project = [&](Tensor<double> t) { return sum_all(mul(t, w)); };
  EXPECT_LT(gradcheck({&x}, [&] { return project(relu(x)); }).max_rel_error, kTol);
  EXPECT_LT(gradcheck({&y}, [&] { return project(relu(y)); }).max_rel_error, kTol);
  auto c = randt({3, 3}, rng, -0.8, 0.8);
  auto wc = randt({3, 3}, rng);
  EXPECT_LT(gradcheck({&c}, [&] { return sum_all(mul(clamp_max(c, 0.9), wc)); }).max_rel_error,
            kTol);
}

TEST(GradCheck, MatmulAllTransposeFlags) {
  Rng rng(12);
  auto a = randt({3, 4}, rng);
  auto at = randt({4, 3}, rng);
  auto b = randt({4, 5}, rng);
  auto bt = randt({5, 4}, rng);
  auto w = randt({3, 5}, rng);
  auto project = [&](Tensor<double> t) { return sum_all(mul(t, w)); };
  EXPECT_LT(gradcheck({&a, &b}, [&] { return project(matmul(a, b)); }).max_rel_error, kTol);
  EXPECT_LT(gradcheck({&at, &b}, [&] { return project(matmul(at, b, true, false)); }).max_rel_error, kTol);
  EXPECT_LT(gradcheck({&a, &bt}, [&] { return project(matmul(a, bt, false, true)); }).max_rel_error, kTol);
  EXPECT_LT(gradcheck({&at, &bt}, [&] { return project(matmul(at, bt, true, true)); }).max_rel_error, kTol);
}

TEST(GradCheck, BmmAffineAndShapes) {
  Rng rng(13);
  auto a = randt({2, 3, 4}, rng);
  auto b = randt({2, 4, 2}, rng);
  auto pw = randt({2, 3, 2}, rng);
  EXPECT_LT(gradcheck({&a, &b}, [&] { return sum_all(mul(bmm(a, b), pw)); }).max_rel_error, kTol);

  auto x = randt({5, 3}, rng);
  auto w = randt({3, 4}, rng);
  auto bias = randt({4}, rng);
  auto pw2 = randt({5, 4}, rng);
  EXPECT_LT(gradcheck({&x, &w, &bias}, [&] { return sum_all(mul(affine(x, w, bias), pw2)); })
                .max_rel_error,
            kTol);

  auto r3 = randt({2, 5, 3}, rng);
  auto pw3 = randt({2, 5, 4}, rng);
  EXPECT_LT(gradcheck({&r3, &w, &bias}, [&] { return sum_all(mul(affine(r3, w, bias), pw3)); })
                .max_rel_error,
            kTol);
}

TEST(GradCheck, ReductionsAndRowOps) {
  Rng rng(14);
  auto x = randt({4, 6}, rng);
  auto s = randt({4}, rng, 0.3, 2.0);
  auto w1 = randt({4}, rng);
  auto w2 = randt({4, 6}, rng);
  EXPECT_LT(gradcheck({&x}, [&] { return mean_all(x); }).max_rel_error, kTol);
  EXPECT_LT(gradcheck({&x}, [&] { return sum_all(mul(sum_last(x), w1)); }).max_rel_error, kTol);
  EXPECT_LT(gradcheck({&x, &s}, [&] { return sum_all(mul(mul_rows(x, s), w2)); }).max_rel_error, kTol);
  auto gamma = randt({1}, rng, 0.5, 2.0);
  EXPECT_LT(gradcheck({&x, &gamma}, [&] { return sum_all(mul(mul_scalar_tensor(x, gamma), w2)); })
                .max_rel_error,
            kTol);
  EXPECT_LT(gradcheck({&x}, [&] { return sum_all(mul(l2_normalize_rows(x), w2)); }).max_rel_error,
            kTol);
}

TEST(GradCheck, ShapeOps) {
  Rng rng(15);
  auto a = randt({3, 4}, rng);
  auto b = randt({3, 2}, rng);
  auto w6 = randt({3, 6}, rng);
  auto w2 = randt({3, 2}, rng);
  EXPECT_LT(gradcheck({&a, &b}, [&] { return sum_all(mul(concat_last(a, b), w6)); }).max_rel_error,
            kTol);
  EXPECT_LT(gradcheck({&a}, [&] { return sum_all(mul(slice_last(a, 1, 3), w2)); }).max_rel_error,
            kTol);
  auto w43 = randt({4, 3}, rng);
  EXPECT_LT(gradcheck({&a}, [&] { return sum_all(mul(reshape(a, {4, 3}), w43)); }).max_rel_error,
            kTol);

  auto t0 = randt({2, 3}, rng);
  auto t1 = randt({2, 3}, rng);
  auto wst = randt({2, 2, 3}, rng);
  EXPECT_LT(gradcheck({&t0, &t1},
                      [&] { return sum_all(mul(stack_tokens<double>({t0, t1}), wst)); })
                .max_rel_error,
            kTol);
  auto wtok = randt({2, 3}, rng);
  EXPECT_LT(gradcheck({&t0, &t1},
                      [&] {
                        auto st = stack_tokens<double>({t0, t1});
                        return sum_all(mul(select_token(st, 1), wtok));
                      })
                .max_rel_error,
            kTol);

  auto v = randt({5}, rng);
  auto wr = randt({3, 5}, rng);
  EXPECT_LT(gradcheck({&v}, [&] { return sum_all(mul(repeat_row(v, 3), wr)); }).max_rel_error, kTol);
}

TEST(GradCheck, NormalizationSoftmaxLosses) {
  Rng rng(16);
  auto x = randt({4, 6}, rng, -2, 2);
  auto gain = randt({6}, rng, 0.5, 1.5);
  auto bias = randt({6}, rng);
  auto w = randt({4, 6}, rng);
  EXPECT_LT(gradcheck({&x, &gain, &bias},
                      [&] { return sum_all(mul(layer_norm(x, gain, bias), w)); })
                .max_rel_error,
            kTol);
  EXPECT_LT(gradcheck({&x}, [&] { return sum_all(mul(softmax_last(x), w)); }).max_rel_error, kTol);

  std::vector<int> targets{1, 3, -1, 0};  // row 2 ignored
  EXPECT_LT(gradcheck({&x}, [&] { return cross_entropy(x, targets); }).max_rel_error, kTol);

  auto table = randt({7, 3}, rng);
  std::vector<int> ids{0, 3, 6, 3};
  auto wid = randt({4, 3}, rng);
  EXPECT_LT(gradcheck({&table},
                      [&] { return sum_all(mul(embedding_lookup(table, ids), wid)); })
                .max_rel_error,
            kTol);

  auto y = randt({4, 6}, rng);
  auto wc = randt({4}, rng);
  EXPECT_LT(gradcheck({&x, &y}, [&] { return sum_all(mul(cosine_similarity(x, y), wc)); })
                .max_rel_error,
            kTol);
  EXPECT_LT(gradcheck({&x, &y}, [&] { return mse(x, y); }).max_rel_error, kTol);
}

TEST(GradCheck, MaskedMeanAndDropout) {
  Rng rng(17);
  auto x = randt({2, 3, 4}, rng);
  std::vector<uint8_t> mask{1, 1, 0, 1, 0, 0};
  auto w = randt({2, 4}, rng);
  EXPECT_LT(gradcheck({&x}, [&] { return sum_all(mul(masked_mean_tokens(x, mask), w)); })
                .max_rel_error,
            kTol);

  auto wx = randt({2, 3, 4}, rng);
  // dropout must reuse the same mask on every probe: re-seed per call
  EXPECT_LT(gradcheck({&x},
                      [&] {
                        Rng drop_rng(99);
                        return sum_all(mul(dropout(x, 0.4, drop_rng), wx));
                      })
                .max_rel_error,
            kTol);
}

TEST(Tensor, SoftmaxRowsSumToOne) {
  Rng rng(18);
  auto x = randt({5, 9}, rng, -4, 4);
  auto s = softmax_last(x);
  for (int64_t r = 0; r < 5; ++r) {
    double sum = 0;
    for (int64_t j = 0; j < 9; ++j) sum += s.data()[r * 9 + j];
    EXPECT_NEAR(sum, 1.0, 1e-12);
  }
  // uniform logits -> uniform distribution
  auto u = Td::full({2, 4}, 0.7);
  auto su = softmax_last(u);
  for (int64_t i = 0; i < 8; ++i) EXPECT_NEAR(su.data()[i], 0.25, 1e-12);
}

TEST(Tensor, CrossEntropyPeakedLogitsNearZero) {
  auto logits = Td::full({1, 5}, 0.0);
  logits.mutable_data()[2] = 50.0;
  auto loss = cross_entropy(logits, {2});
  EXPECT_NEAR(loss.item(), 0.0, 1e-12);
}

TEST(Tensor, CosineSelfSimilarityIsOne) {
  Rng rng(19);
  auto x = randt({6, 8}, rng, -3, 3);
  auto c = cosine_similarity(x, x);
  for (int64_t i = 0; i < 6; ++i) EXPECT_NEAR(c.data()[i], 1.0, 1e-9);
}

TEST(Tensor, ZeroNormRowThrows) {
  auto x = Td::full({2, 3}, 0.0);
  x.mutable_data()[0] = 1.0;
  EXPECT_THROW(l2_normalize_rows(x), ContractError);
}

}  // namespace
}  // namespace poseweave::nn
