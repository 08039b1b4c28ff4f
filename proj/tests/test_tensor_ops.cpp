#include <gtest/gtest.h>

#include <cmath>
#include <functional>
#include <vector>

#include "fttab/errors.hpp"
#include "fttab/grad_check.hpp"
#include "fttab/ops.hpp"
#include "fttab/optim.hpp"
#include "fttab/random.hpp"
#include "fttab/tensor.hpp"

using namespace fttab;

namespace {

Tensor random_tensor(Shape shape, Rng& rng, bool requires_grad = true) {
  Tensor t(std::move(shape), requires_grad);
  fill_normal(t.data(), 1.0, rng);
  return t;
}

// Weighted sum with fixed random coefficients turns any tensor into a scalar
// whose gradient exercises every output entry.
Tensor probe(const Tensor& y, const Tensor& weights) { return sum(mul(y, weights)); }

}  // namespace

TEST(TensorTest, ShapeAndDataMustAgree) {
  EXPECT_THROW(Tensor({2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
  Tensor t({2, 3});
  EXPECT_EQ(t.numel(), 6u);
  EXPECT_FALSE(t.requires_grad());
  EXPECT_TRUE(t.is_leaf());
}

TEST(TensorTest, BackwardOfLossWithRespectToItselfIsOne) {
  Tensor x = Tensor::scalar(3.0, true);
  auto tape = ComputationTape::record(x);
  tape.backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 1.0);
}

TEST(TensorTest, TapeIsTopologicallyOrdered) {
  Tensor a = Tensor::vector({1, 2}, true);
  Tensor b = add(a, a);
  Tensor c = sum(mul(b, a));
  auto tape = ComputationTape::record(c);
  const auto& nodes = tape.nodes();
  ASSERT_EQ(nodes.back(), c.node());
  for (std::size_t i = 0; i < nodes.size(); ++i)
    for (const auto& parent : nodes[i]->parents)
      for (std::size_t j = i; j < nodes.size(); ++j) EXPECT_NE(nodes[j], parent);
  tape.backward();
  // c = sum(2a * a) -> dc/da = 4a
  EXPECT_DOUBLE_EQ(a.grad()[0], 4.0);
  EXPECT_DOUBLE_EQ(a.grad()[1], 8.0);
}

TEST(TensorTest, FrozenLeavesNeverAccumulate) {
  Tensor w = Tensor::from_rows({{1, 2}, {3, 4}}, false);
  Tensor x = Tensor::from_rows({{1, 1}}, true);
  sum(matmul(x, w)).backward();
  EXPECT_FALSE(w.has_grad());
  EXPECT_TRUE(x.has_grad());
}

TEST(TensorTest, NoGradGuardSkipsRecording) {
  Tensor x = Tensor::vector({1, 2}, true);
  NoGradGuard guard;
  Tensor y = scale(x, 2.0);
  EXPECT_FALSE(y.requires_grad());
  EXPECT_TRUE(y.is_leaf());
}

TEST(LinearForwardTest, IdentityInputReturnsWeightRows) {
  auto y = linear_forward(Tensor::from_rows({{1, 0}, {0, 1}}), Tensor::from_rows({{3, 4}, {5, 6}}));
  EXPECT_EQ(y.shape(), (Shape{2, 2}));
  EXPECT_EQ(std::vector<double>(y.data().begin(), y.data().end()), (std::vector<double>{3, 4, 5, 6}));
}

TEST(LinearForwardTest, ZeroInputGivesZeroOutput) {
  auto y = linear_forward(Tensor::from_rows({{0, 0}}), Tensor::from_rows({{1.5, -2, 7}, {0.25, 9, -1}}));
  for (double v : y.data()) EXPECT_EQ(v, 0.0);
}

TEST(LinearForwardTest, HandComputedWithBias) {
  auto y = linear_forward(Tensor::from_rows({{1, 2}}), Tensor::from_rows({{1, 1}, {1, -1}}), Tensor::vector({0.5, 0.5}));
  // [1*1 + 2*1 + 0.5, 1*1 + 2*(-1) + 0.5]
  EXPECT_DOUBLE_EQ(y.at(0, 0), 3.5);
  EXPECT_DOUBLE_EQ(y.at(0, 1), -0.5);
}

TEST(LinearForwardTest, InnerDimensionMismatchThrows) {
  EXPECT_THROW(linear_forward(Tensor::from_rows({{1, 2, 3}}), Tensor::from_rows({{1, 1}, {1, -1}})), DimensionError);
}

TEST(CrossEntropyTest, UniformLogitsGiveLogTwo) {
  const int y[] = {0};
  EXPECT_DOUBLE_EQ(softmax_cross_entropy(Tensor::from_rows({{0, 0}}), y).item(), std::log(2.0));
}

TEST(CrossEntropyTest, SaturatedLogitsStayFinite) {
  const int y[] = {0};
  const double v = softmax_cross_entropy(Tensor::from_rows({{1000, 0}}), y).item();
  EXPECT_TRUE(std::isfinite(v));
  EXPECT_NEAR(v, 0.0, 1e-300);
  const int wrong[] = {1};
  EXPECT_DOUBLE_EQ(softmax_cross_entropy(Tensor::from_rows({{1000, 0}}), wrong).item(), 1000.0);
}

TEST(CrossEntropyTest, ThreeClassMatchesLogSumExpOracle) {
  const int y[] = {2};
  // ln(e^1 + e^2 + e^3) - 3 = ln(1 + e^-1 + e^-2)
  EXPECT_NEAR(softmax_cross_entropy(Tensor::from_rows({{1, 2, 3}}), y).item(), 0.4076059644443804, 1e-15);
}

TEST(CrossEntropyTest, LabelOutOfRangeThrows) {
  const int y[] = {3};
  EXPECT_THROW(softmax_cross_entropy(Tensor::from_rows({{1, 2, 3}}), y), IndexError);
  const int neg[] = {-1};
  EXPECT_THROW(softmax_cross_entropy(Tensor::from_rows({{1, 2, 3}}), neg), IndexError);
}

TEST(CrossEntropyTest, GradientIsSoftmaxMinusOneHotOverN) {
  Tensor logits = Tensor::from_rows({{0, 0}, {1, 2}}, true);
  const int y[] = {0, 1};
  softmax_cross_entropy(logits, y).backward();
  auto g = logits.grad();
  EXPECT_DOUBLE_EQ(g[0], (0.5 - 1.0) / 2);
  EXPECT_DOUBLE_EQ(g[1], 0.5 / 2);
  const double p0 = 1.0 / (1.0 + std::exp(1.0));
  EXPECT_NEAR(g[2], p0 / 2, 1e-15);
  EXPECT_NEAR(g[3], (1.0 - p0 - 1.0) / 2, 1e-15);
}

TEST(CrossEntropyTest, FiniteForLargeMagnitudes) {
  Rng rng(11);
  for (int trial = 0; trial < 50; ++trial) {
    Tensor logits({4, 5});
    fill_normal(logits.data(), 1e4, rng);
    const int y[] = {0, 1, 2, 4};
    EXPECT_TRUE(std::isfinite(softmax_cross_entropy(logits, y).item()));
  }
}

TEST(GradCheckTest, QuadraticIsExactToRoundoff) {
  Tensor x = Tensor::vector({1, 2, 3}, true);
  auto r = grad_check([&] { return sum(mul(x, x)); }, {{"x", x, {}}}, {.eps = 1e-5});
  EXPECT_LT(r.max_relative_error, 1e-7);
  EXPECT_EQ(r.entries_checked, 3u);
}

TEST(GradCheckTest, CrossEntropyOnRandomLogits) {
  Rng rng(5);
  Tensor logits = random_tensor({4, 3}, rng);
  const int y[] = {0, 2, 1, 2};
  auto r = grad_check([&] { return softmax_cross_entropy(logits, y); }, {{"logits", logits, {}}});
  EXPECT_LT(r.max_relative_error, 1e-5);
}

TEST(GradCheckTest, RejectsBadEpsAndNonFiniteObjective) {
  Tensor x = Tensor::vector({1}, true);
  EXPECT_THROW(grad_check([&] { return sum(x); }, {{"x", x, {}}}, {.eps = 0.0}), PreconditionError);
  EXPECT_THROW(grad_check([&] { return sum(x); }, {{"x", x, {}}}, {.eps = 1e-2}), PreconditionError);
  EXPECT_THROW(grad_check([&] { return scale(sum(x), std::nan("")); }, {{"x", x, {}}}), NumericError);
}

TEST(GradCheckTest, FlippedSignIsDetected) {
  Tensor x = Tensor::vector({1, 2, 3}, true);
  auto r = grad_check([&] { return sum(mul(x, x)); }, {{"x", x, {}}}, {.flip_analytic_sign = true});
  EXPECT_GT(r.max_relative_error, 1.0);
}

TEST(GradCheckTest, FrozenParametersAreSkipped) {
  Tensor x = Tensor::vector({1, 2}, false);
  auto r = grad_check([&] { return sum(mul(x, x)); }, {{"x", x, {}}});
  EXPECT_EQ(r.entries_checked, 0u);
}

// Property: every primitive's backward pass agrees with central differences
// over random shapes and seeds.
TEST(PrimitiveGradientProperty, MatchesCentralDifferences) {
  for (std::uint64_t seed = 0; seed < 12; ++seed) {
    Rng rng(seed);
    const std::size_t n = uniform_index(rng, 1, 4), k = uniform_index(rng, 1, 4);
    const std::size_t heads = uniform_index(rng, 1, 2);
    const std::size_t d = heads * uniform_index(rng, 1, 3);
    Tensor a = random_tensor({n, k}, rng);
    Tensor b = random_tensor({k, d}, rng);
    Tensor bias = random_tensor({d}, rng);
    Tensor gain = random_tensor({d}, rng);
    Tensor x = random_tensor({n, d}, rng);
    Tensor x2 = random_tensor({n, d}, rng);
    Tensor w_nd = random_tensor({n, d}, rng, false);
    Tensor w_dn = random_tensor({d, n}, rng, false);
    Tensor w_nn = random_tensor({n, n}, rng, false);
    Tensor w_dd = random_tensor({d, d}, rng, false);
    std::vector<std::size_t> pick;
    for (std::size_t i = 0; i < n + 1; ++i) pick.push_back(uniform_index(rng, 0, n - 1));
    Tensor w_pick = random_tensor({pick.size(), d}, rng, false);

    // Random mask with every row keeping at least its own position.
    AttentionMask mask{n, std::vector<bool>(n * n)};
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) mask.allowed[i * n + j] = i == j || uniform01(rng) < 0.6;

    const std::vector<std::pair<const char*, std::function<Tensor()>>> cases = {
        {"matmul", [&] { return probe(matmul(a, b), w_nd); }},
        {"linear", [&] { return probe(linear_forward(x, w_dd, bias), w_nd); }},
        {"transpose", [&] { return probe(transpose(x), w_dn); }},
        {"add_mul", [&] { return probe(mul(add(x, x2), x), w_nd); }},
        {"gelu", [&] { return probe(gelu(x), w_nd); }},
        {"layer_norm", [&] { return probe(layer_norm(x, gain, bias), w_nd); }},
        {"attention", [&] { return probe(masked_attention(x, x2, mul(x, x2), mask, heads), w_nd); }},
        {"select_rows", [&] { return probe(select_rows(x, pick), w_pick); }},
        {"slice_concat", [&] { return probe(concat_rows(slice_cols(x, 0, d), x2), concat_rows(w_nd, w_nd)); }},
        {"normalize_gram", [&] {
           Tensor u = normalize_rows(x, 1e-12);
           return offdiag_square_sum(matmul(u, transpose(u)));
         }},
        {"gram_probe", [&] { return probe(matmul(x, transpose(x2)), w_nn); }},
        {"ordered_sum", [&] {
           const Tensor terms[] = {x, x2, scale(x, -0.5)};
           return probe(ordered_sum(terms), w_nd);
         }},
        {"cross_entropy", [&] {
           std::vector<int> y(n);
           for (std::size_t i = 0; i < n; ++i) y[i] = static_cast<int>(i % d);
           return softmax_cross_entropy(x, y);
         }},
    };
    for (const auto& [name, f] : cases) {
      ParameterList params{{"a", a, {}}, {"b", b, {}}, {"bias", bias, {}}, {"gain", gain, {}}, {"x", x, {}}, {"x2", x2, {}}};
      auto r = grad_check(f, params, {.eps = 1e-5});
      EXPECT_LT(r.max_relative_error, 1e-5) << name << " seed " << seed << " worst " << r.worst_parameter;
    }
  }
}

TEST(AdamTest, FrozenTensorsAreBitIdenticalAfterSteps) {
  Rng rng(3);
  Tensor trainable = random_tensor({3, 2}, rng);
  Tensor frozen = random_tensor({2, 2}, rng, false);
  Tensor table = random_tensor({3, 2}, rng);
  std::fill_n(table.data().begin(), 2, 0.0);
  const auto frozen_before = std::vector<double>(frozen.data().begin(), frozen.data().end());
  Adam opt({{"t", trainable, {}}, {"f", frozen, {}}, {"table", table, {0}}}, {.learning_rate = 0.1});
  for (int step = 0; step < 25; ++step) {
    opt.zero_grad();
    sum(mul(matmul(add(trainable, table), frozen), matmul(trainable, frozen))).backward();
    opt.step();
  }
  EXPECT_EQ(std::vector<double>(frozen.data().begin(), frozen.data().end()), frozen_before);
  EXPECT_EQ(table.data()[0], 0.0);
  EXPECT_EQ(table.data()[1], 0.0);
  EXPECT_EQ(opt.steps_taken(), 25u);
}

TEST(AdamTest, SameSeedSameTrajectory) {
  auto run = [] {
    Rng rng(42);
    Tensor w = random_tensor({4, 3}, rng);
    Tensor x = random_tensor({5, 4}, rng, false);
    const int y[] = {0, 1, 2, 1, 0};
    Adam opt({{"w", w, {}}}, {.learning_rate = 0.05});
    for (int step = 0; step < 20; ++step) {
      opt.zero_grad();
      softmax_cross_entropy(matmul(x, w), y).backward();
      opt.step();
    }
    return std::vector<double>(w.data().begin(), w.data().end());
  };
  EXPECT_EQ(run(), run());
}

TEST(AdamTest, ReducesASimpleLoss) {
  Tensor w = Tensor::vector({3.0, -2.0}, true);
  Adam opt({{"w", w, {}}}, {.learning_rate = 0.1});
  const double before = sum(mul(w, w)).item();
  for (int step = 0; step < 100; ++step) {
    opt.zero_grad();
    sum(mul(w, w)).backward();
    opt.step();
  }
  EXPECT_LT(sum(mul(w, w)).item(), before * 0.01);
}
