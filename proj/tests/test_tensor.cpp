#include <gtest/gtest.h>

#include <cmath>

#include "srdnet/autodiff.hpp"
#include "srdnet/tensor.hpp"

using namespace srdnet;

namespace {

Tensor leaf(Shape shape, std::initializer_list<double> v) {
  Vector values(static_cast<Index>(v.size()));
  Index i = 0;
  for (double x : v) values[i++] = x;
  return Tensor(std::move(shape), std::move(values), true);
}

}  // namespace

TEST(Creation, ZerosAndConstant) {
  const Tensor z = zeros({2, 3});
  EXPECT_EQ(z.shape(), (Shape{2, 3}));
  EXPECT_EQ(z.size(), 6);
  EXPECT_EQ(z.values().cwiseAbs().sum(), 0.0);
  const Tensor c = constant({4}, 1.0);
  for (double v : c.data()) EXPECT_EQ(v, 1.0);
}

TEST(Creation, RejectsNonPositiveDims) {
  EXPECT_THROW(zeros({2, 0}), ShapeError);
  EXPECT_THROW(constant({-1}, 1.0), ShapeError);
}

TEST(Creation, UniformIsReproducible) {
  Rng a(7), b(7);
  const Tensor x = uniform({2, 2}, a, -1, 1), y = uniform({2, 2}, b, -1, 1);
  EXPECT_EQ(x.values(), y.values());
  for (double v : x.data()) {
    EXPECT_GE(v, -1.0);
    EXPECT_LT(v, 1.0);
  }
}

TEST(Creation, KaimingBound) {
  Rng rng(1);
  const Tensor w = kaiming_uniform({64, 9}, rng, 9);
  EXPECT_LE(w.values().cwiseAbs().maxCoeff(), std::sqrt(6.0 / 9.0));
  const Tensor v = kaiming_uniform({64, 9}, rng, 9, false, std::sqrt(5.0));
  EXPECT_LE(v.values().cwiseAbs().maxCoeff(), 1.0 / 3.0);
}

TEST(Rng, KnownStream) {
  // First output of the standard 64-bit Mersenne Twister seeded with 5489.
  Rng rng(5489);
  EXPECT_EQ(rng.next(), 14514284786278117030ULL);
}

TEST(Rng, ForkedStreamsDiffer) {
  Rng base(3);
  Rng a = Rng(base).fork(1), b = Rng(base).fork(2);
  EXPECT_NE(a.next(), b.next());
  Rng c = Rng(base).fork(1);
  Rng d = Rng(base).fork(1);
  EXPECT_EQ(c.next(), d.next());
}

TEST(Rng, BelowStaysInRange) {
  Rng rng(11);
  for (int i = 0; i < 1000; ++i) {
    const Index v = rng.below(7);
    EXPECT_GE(v, 0);
    EXPECT_LT(v, 7);
  }
}

TEST(Elementwise, BroadcastAdd) {
  const Tensor a = leaf({2, 3}, {1, 2, 3, 4, 5, 6});
  const Tensor b = leaf({2, 1}, {10, 20});
  const Tensor c = a + b;
  EXPECT_EQ(c.values(), (Vector(6) << 11, 12, 13, 24, 25, 26).finished());
  const Gradients g = backward(sum(c));
  EXPECT_EQ(g.of(b), (Vector(2) << 3, 3).finished());
  EXPECT_EQ(g.of(a), Vector::Ones(6));
}

TEST(Elementwise, ProductGradient) {
  const Tensor a = leaf({1}, {2}), b = leaf({1}, {5});
  const Gradients g = backward(sum(a * b));
  EXPECT_EQ(g.of(a)[0], 5.0);
  EXPECT_EQ(g.of(b)[0], 2.0);
}

TEST(Elementwise, ShapeMismatchThrows) {
  EXPECT_THROW(zeros({2, 3}) + zeros({3, 2}), ShapeError);
  EXPECT_THROW(zeros({2, 3}) * zeros({2}), ShapeError);
}

TEST(Elementwise, AbsSquareScale) {
  const Tensor a = leaf({3}, {-2, 0.5, 3});
  EXPECT_EQ(abs(a).values(), (Vector(3) << 2, 0.5, 3).finished());
  EXPECT_EQ(square(a).values(), (Vector(3) << 4, 0.25, 9).finished());
  EXPECT_EQ(scale(a, -2).values(), (Vector(3) << 4, -1, -6).finished());
  const Gradients g = backward(sum(abs(a) + square(a)));
  EXPECT_EQ(g.of(a), (Vector(3) << -1 - 4, 1 + 1, 1 + 6).finished());
}

TEST(Reduction, SumAndMean) {
  const Tensor a = leaf({2, 2}, {1, 2, 3, 4});
  EXPECT_EQ(sum(a).item(), 10.0);
  EXPECT_EQ(mean(a).item(), 2.5);
  EXPECT_EQ(sum(a).rank(), 0);
  EXPECT_EQ(backward(mean(a)).of(a), Vector::Constant(4, 0.25));
}

TEST(Linear, MatmulMatchesNaive) {
  Rng rng(2);
  const Tensor a = uniform({3, 4}, rng, -1, 1, true), b = uniform({4, 5}, rng, -1, 1, true);
  const Tensor c = matmul(a, b);
  ASSERT_EQ(c.shape(), (Shape{3, 5}));
  for (Index i = 0; i < 3; ++i)
    for (Index j = 0; j < 5; ++j) {
      double acc = 0;
      for (Index k = 0; k < 4; ++k) acc += a.at({i, k}) * b.at({k, j});
      EXPECT_NEAR(c.at({i, j}), acc, 1e-14);
    }
  // d sum(AB)/dA = 1·Bᵀ: row sums of B, repeated.
  const Gradients g = backward(sum(c));
  for (Index i = 0; i < 3; ++i)
    for (Index k = 0; k < 4; ++k) EXPECT_NEAR(g.of(a)[i * 4 + k], b.matrix().row(k).sum(), 1e-14);
}

TEST(Linear, TransposeAndReshape) {
  const Tensor a = leaf({2, 3}, {1, 2, 3, 4, 5, 6});
  EXPECT_EQ(transpose(a).values(), (Vector(6) << 1, 4, 2, 5, 3, 6).finished());
  EXPECT_EQ(reshape(a, {3, 2}).values(), a.values());
  EXPECT_THROW(reshape(a, {4, 2}), ShapeError);
  EXPECT_THROW(matmul(a, a), ShapeError);
}

TEST(Layout, ConcatAndSlice) {
  const Tensor a = leaf({2, 2}, {1, 2, 3, 4});
  const Tensor b = leaf({2, 1}, {9, 8});
  const Tensor c = concat({a, b}, 1);
  EXPECT_EQ(c.shape(), (Shape{2, 3}));
  EXPECT_EQ(c.values(), (Vector(6) << 1, 2, 9, 3, 4, 8).finished());
  const Tensor s = slice(c, 1, 1, 2);
  EXPECT_EQ(s.values(), (Vector(4) << 2, 9, 4, 8).finished());
  const Gradients g = backward(sum(s));
  EXPECT_EQ(g.of(a), (Vector(4) << 0, 1, 0, 1).finished());
  EXPECT_EQ(g.of(b), (Vector(2) << 1, 1).finished());
  EXPECT_THROW(slice(c, 1, 2, 2), ShapeError);
  EXPECT_THROW(concat({a, leaf({3, 1}, {1, 2, 3})}, 1), ShapeError);
}

TEST(Autodiff, SharedSubexpressionAccumulates) {
  const Tensor x = leaf({1}, {3});
  const Tensor y = x * x;          // used twice below
  const Tensor z = sum(y + y * x);  // 2x² ... = x² + x³
  EXPECT_EQ(z.item(), 9.0 + 27.0);
  EXPECT_DOUBLE_EQ(backward(z).of(x)[0], 2 * 3.0 + 3 * 9.0);
}

TEST(Autodiff, DetachedValuesCarryNoGradient) {
  const Tensor x = leaf({2}, {1, 2});
  const Tensor z = sum(x * x.detach());
  EXPECT_EQ(backward(z).of(x), (Vector(2) << 1, 2).finished());
}

TEST(Autodiff, NonScalarLossIsRejected) {
  const Tensor x = leaf({2}, {1, 2});
  EXPECT_THROW(backward(x), UsageError);
}

TEST(Autodiff, UnusedLeafHasNoEntry) {
  const Tensor x = leaf({1}, {1}), y = leaf({1}, {2});
  const Gradients g = backward(sum(x));
  EXPECT_EQ(g.find(y), nullptr);
  EXPECT_EQ(g.of(y), Vector::Zero(1));
}

TEST(Autodiff, TapeOrdersInputsFirst) {
  const Tensor x = leaf({1}, {1});
  const Tensor y = x + x;
  const Tensor z = sum(y * y);
  const Tape tape(z);
  ASSERT_EQ(tape.order().size(), 4u);
  EXPECT_EQ(tape.order().front(), x.id());
  EXPECT_EQ(tape.order().back(), z.id());
}
