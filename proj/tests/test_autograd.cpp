#include <gtest/gtest.h>

#include <functional>

#include "test_util.hpp"

using namespace ssltsc;
using V = nn::Var<double>;

namespace {

Tensor<double> randn(Shape s, Rng& rng, double scale = 1.0) {
  Tensor<double> t(std::move(s));
  for (auto& v : t.values()) v = normal(rng, 0.0, scale);
  return t;
}

/// Worst relative error between backward() and central differences over
/// every input element; the loss is reduced to a scalar by a fixed random
/// projection so that all output elements matter.
double op_gradient_error(const std::function<V(const std::vector<V>&)>& op, std::vector<Tensor<double>> inputs) {
  Rng rng(99);
  std::optional<Tensor<double>> proj;
  auto scalar = [&](const std::vector<V>& vs) {
    auto out = op(vs);
    if (out.value().size() == 1) return out;
    if (!proj) proj = randn(out.shape(), rng);
    return nn::sum(nn::mul(out, V::constant(*proj)));
  };
  std::vector<V> leaves;
  for (auto& t : inputs) leaves.push_back(V::leaf(t));
  scalar(leaves).backward();
  double worst = 0;
  for (std::size_t a = 0; a < inputs.size(); ++a) {
    for (std::size_t j = 0; j < inputs[a].size(); ++j) {
      auto eval = [&](double delta) {
        auto shifted = inputs;
        shifted[a][j] += delta;
        std::vector<V> cs;
        for (auto& t : shifted) cs.push_back(V::constant(t));
        return scalar(cs).item();
      };
      const double h = 1e-6;
      const double numeric = (eval(h) - eval(-h)) / (2 * h);
      const double analytic = leaves[a].grad()[j];
      worst = std::max(worst, std::abs(numeric - analytic) / std::max({std::abs(numeric), std::abs(analytic), 1e-6}));
    }
  }
  return worst;
}

constexpr double kTol = 1e-6;

}  // namespace

TEST(Ops, Elementwise) {
  Rng rng(1);
  const auto a = randn({3, 4}, rng), b = randn({3, 4}, rng);
  EXPECT_LT(op_gradient_error([](const auto& v) { return nn::add(v[0], v[1]); }, {a, b}), kTol);
  EXPECT_LT(op_gradient_error([](const auto& v) { return nn::sub(v[0], v[1]); }, {a, b}), kTol);
  EXPECT_LT(op_gradient_error([](const auto& v) { return nn::mul(v[0], v[1]); }, {a, b}), kTol);
  EXPECT_LT(op_gradient_error([](const auto& v) { return nn::scale(v[0], 2.5); }, {a}), kTol);
  EXPECT_LT(op_gradient_error([](const auto& v) { return nn::mean(v[0]); }, {a}), kTol);
}

TEST(Ops, ReluAwayFromKink) {
  Rng rng(2);
  auto a = randn({2, 3, 5}, rng);
  for (auto& v : a.values()) v += v > 0 ? 0.1 : -0.1;
  EXPECT_LT(op_gradient_error([](const auto& v) { return nn::relu(v[0]); }, {a}), kTol);
}

TEST(Ops, ShapeOps) {
  Rng rng(3);
  const auto a = randn({2, 3, 4}, rng), b = randn({1, 3, 4}, rng);
  EXPECT_LT(op_gradient_error([](const auto& v) { return nn::concat_rows(std::vector<V>{v[0], v[1]}); }, {a, b}), kTol);
  EXPECT_LT(op_gradient_error([](const auto& v) { return nn::slice_rows(v[0], 1, 2); }, {a}), kTol);
  EXPECT_LT(op_gradient_error([](const auto& v) { return nn::reshape(v[0], Shape{6, 4}); }, {a}), kTol);
  EXPECT_LT(op_gradient_error([](const auto& v) { return nn::global_avg_pool(v[0]); }, {a}), kTol);
  EXPECT_LT(op_gradient_error([](const auto& v) { return nn::broadcast_time(v[0], 7); }, {randn({2, 3}, rng)}), kTol);
}

TEST(Ops, ConvolutionSamePadding) {
  Rng rng(4);
  for (std::size_t k : {3u, 5u, 8u}) {
    EXPECT_LT(op_gradient_error([](const auto& v) { return nn::conv1d_same(v[0], v[1], v[2]); },
                                {randn({2, 3, 9}, rng), randn({4, 3, k}, rng), randn({4}, rng)}),
              kTol)
        << "kernel " << k;
  }
}

TEST(Ops, ConvolutionMatchesDirectSum) {
  Tensor<double> x(Shape{1, 1, 5}, std::vector<double>{1, 2, 3, 4, 5});
  Tensor<double> w(Shape{1, 1, 3}, std::vector<double>{1, 0, -1});
  Tensor<double> b(Shape{1}, 0.5);
  const auto y = nn::conv1d_same(V::constant(x), V::constant(w), V::constant(b)).value();
  // Odd kernel: centred window with one zero on each side.
  EXPECT_EQ(std::vector<double>(y.values().begin(), y.values().end()), (std::vector<double>{0.5 - 2, 0.5 + 1 - 3, 0.5 + 2 - 4, 0.5 + 3 - 5, 0.5 + 4}));
}

TEST(Ops, BatchNormalization) {
  Rng rng(5);
  EXPECT_LT(op_gradient_error([](const auto& v) { return nn::normalize_batch(v[0], 1e-5); }, {randn({4, 3, 6}, rng)}),
            1e-5);
  EXPECT_LT(op_gradient_error([](const auto& v) { return nn::channel_affine(v[0], v[1], v[2]); },
                              {randn({2, 3, 4}, rng), randn({3}, rng), randn({3}, rng)}),
            kTol);
}

TEST(Ops, BatchNormalizationMoments) {
  Rng rng(6);
  const auto y = nn::normalize_batch(V::constant(randn({8, 2, 10}, rng, 3.0)), 1e-5).value();
  for (std::size_t c = 0; c < 2; ++c) {
    double s = 0, ss = 0;
    for (std::size_t n = 0; n < 8; ++n) {
      for (std::size_t t = 0; t < 10; ++t) {
        const double v = y[(n * 2 + c) * 10 + t];
        s += v;
        ss += v * v;
      }
    }
    EXPECT_NEAR(s / 80, 0.0, 1e-12);
    EXPECT_NEAR(ss / 80, 1.0, 1e-5);
  }
}

TEST(Ops, LinearAndLosses) {
  Rng rng(7);
  EXPECT_LT(op_gradient_error([](const auto& v) { return nn::linear(v[0], v[1], v[2]); },
                              {randn({3, 4}, rng), randn({4, 2}, rng), randn({2}, rng)}),
            kTol);
  const auto logits = randn({5, 3}, rng);
  Tensor<double> target(Shape{5, 3});
  for (std::size_t i = 0; i < 5; ++i) {
    const double u = uniform(rng);
    target.at(i, i % 3) = u;
    target.at(i, (i + 1) % 3) = 1 - u;
  }
  const auto p = nn::softmax_values(randn({5, 3}, rng));
  EXPECT_LT(op_gradient_error([](const auto& v) { return nn::softmax(v[0]); }, {logits}), kTol);
  EXPECT_LT(op_gradient_error([&](const auto& v) { return nn::soft_cross_entropy(v[0], target); }, {logits}), kTol);
  EXPECT_LT(op_gradient_error([&](const auto& v) { return nn::kl_divergence(p, v[0]); }, {logits}), kTol);
  EXPECT_LT(op_gradient_error([&](const auto& v) { return nn::row_squared_error(v[0], target); }, {logits}), kTol);
  EXPECT_LT(op_gradient_error([](const auto& v) { return nn::mse(v[0], v[1]); }, {logits, target}), kTol);
}

TEST(Ops, LadderCombinator) {
  Rng rng(8);
  EXPECT_LT(op_gradient_error([](const auto& v) { return nn::ladder_combinator(v[0], v[1], v[2]); },
                              {randn({2, 3, 4}, rng), randn({2, 3, 4}, rng), randn({3, 10}, rng)}),
            kTol);
}

TEST(Ops, CrossEntropyStableForLargeLogits) {
  Tensor<double> l(Shape{1, 2}, std::vector<double>{1000.0, 0.0});
  EXPECT_NEAR(nn::cross_entropy(V::constant(l), std::vector<int>{1}).item(), 1000.0, 1e-9);
}

TEST(Autograd, SharedSubgraphAccumulates) {
  auto x = V::leaf(Tensor<double>(Shape{1}, 3.0));
  auto y = nn::mul(x, x);
  nn::add(y, y).backward();
  EXPECT_DOUBLE_EQ(x.grad()[0], 12.0);
}

TEST(Autograd, ConstantsReceiveNoGradient) {
  auto c = V::constant(Tensor<double>(Shape{2}, 1.0));
  auto x = V::leaf(Tensor<double>(Shape{2}, 2.0));
  nn::sum(nn::mul(c, x)).backward();
  EXPECT_EQ(c.grad(), Tensor<double>(c.grad().shape(), 0.0));
  EXPECT_EQ(x.grad(), Tensor<double>(Shape{2}, 1.0));
}

TEST(Autograd, NonScalarBackwardRejected) {
  EXPECT_THROW(V::leaf(Tensor<double>(Shape{2})).backward(), InternalError);
}
