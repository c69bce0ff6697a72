#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <limits>

#include "oracles.hpp"
#include "ycd/rng.hpp"
#include "ycd/tensor.hpp"

using namespace ycd;

TEST(Zeros, SingleElement) {
  const Tensor t = zeros({1, 1, 1, 1});
  ASSERT_EQ(t.size(), 1u);
  EXPECT_EQ(t[0], 0.0f);
}

TEST(Zeros, CountIsProductOfDims) {
  const Tensor t = zeros({2, 3, 3, 4});
  EXPECT_EQ(t.size(), 72u);
  EXPECT_TRUE(std::all_of(t.data().begin(), t.data().end(), [](float v) { return v == 0.0f; }));
}

TEST(Zeros, ZeroSizedDimIsValid) {
  const Tensor t = zeros({1, 0, 5, 5});
  EXPECT_TRUE(t.empty());
  EXPECT_EQ(t.shape(), (Shape{1, 0, 5, 5}));
}

TEST(Zeros, OverflowingCountThrows) {
  const std::size_t big = std::numeric_limits<std::size_t>::max() / 2;
  EXPECT_THROW(zeros({big, big, 1, 1}), ShapeError);
}

TEST(Tensor, DataLengthMustMatchShape) {
  EXPECT_THROW(Tensor(Shape{1, 2, 2, 1}, std::vector<float>(3)), ShapeError);
  EXPECT_NO_THROW(Tensor(Shape{1, 2, 2, 1}, std::vector<float>(4)));
}

TEST(Tensor, RowMajorNhwcOffsets) {
  Tensor t(Shape{2, 3, 4, 5});
  EXPECT_EQ(t.offset(0, 0, 0, 1), 1u);
  EXPECT_EQ(t.offset(0, 0, 1, 0), 5u);
  EXPECT_EQ(t.offset(0, 1, 0, 0), 20u);
  EXPECT_EQ(t.offset(1, 0, 0, 0), 60u);
}

TEST(MapElementwise, IdentityIsBitwise) {
  Rng rng(1);
  const Tensor t = oracle::random_tensor(rng, {2, 3, 4, 5}, -100, 100);
  EXPECT_TRUE(bitwise_equal(map_elementwise(t, [](float x) { return x; }), t));
}

TEST(MapElementwise, Scaling) {
  const Tensor t(Shape{1, 1, 3, 1}, {1, 2, 3});
  const Tensor out = map_elementwise(t, [](float x) { return x * 2; });
  EXPECT_EQ(out.values(), (std::vector<float>{2, 4, 6}));
}

TEST(MapElementwise, ClampMatchesScalarOracle) {
  const Tensor t(Shape{1, 1, 3, 1}, {-1, 3, 9});
  const auto clamp06 = [](float x) { return std::min(std::max(x, 0.0f), 6.0f); };
  const Tensor out = map_elementwise(t, clamp06);
  for (std::size_t i = 0; i < t.size(); ++i) EXPECT_EQ(out[i], clamp06(t[i]));
  EXPECT_EQ(out.values(), (std::vector<float>{0, 3, 6}));
}

TEST(ReduceMeanSpatial, Constant) {
  Tensor t(Shape{2, 3, 3, 4});
  for (float& v : t.data()) v = 5.0f;
  const Tensor m = reduce_mean_spatial(t);
  EXPECT_EQ(m.shape(), (Shape{2, 1, 1, 4}));
  for (float v : m.data()) EXPECT_EQ(v, 5.0f);
}

TEST(ReduceMeanSpatial, HandArithmetic) {
  const Tensor t(Shape{1, 2, 2, 1}, {1, 2, 3, 4});
  EXPECT_EQ(reduce_mean_spatial(t).values(), std::vector<float>{2.5f});
}

TEST(ReduceMeanSpatial, MatchesSummationOracle) {
  Rng rng(2);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor t = oracle::random_tensor(rng, {2, 7, 7, 8}, -10, 10);
    const auto ref = oracle::mean_spatial(oracle::DTensor(t));
    const Tensor got = reduce_mean_spatial(t);
    for (std::size_t i = 0; i < ref.v.size(); ++i)
      EXPECT_LE(std::abs(got[i] - ref.v[i]), 1e-5 * std::max(1.0, std::abs(ref.v[i])));
  }
}

TEST(ReduceMeanSpatial, EmptyExtentThrows) {
  EXPECT_THROW(reduce_mean_spatial(Tensor(Shape{1, 0, 3, 2})), ShapeError);
  EXPECT_THROW(reduce_mean_spatial(Tensor(Shape{1, 3, 0, 2})), ShapeError);
}

TEST(ReduceMeanSpatial, InvariantUnderSpatialPermutation) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t h = 1 + rng.below(6), w = 1 + rng.below(6), c = 1 + rng.below(5);
    const Tensor t = oracle::random_tensor(rng, {1, h, w, c});
    std::vector<std::size_t> perm(h * w);
    for (std::size_t i = 0; i < perm.size(); ++i) perm[i] = i;
    rng.shuffle(std::span<std::size_t>(perm));
    Tensor p(t.shape());
    for (std::size_t pos = 0; pos < perm.size(); ++pos)
      for (std::size_t ch = 0; ch < c; ++ch) p[pos * c + ch] = t[perm[pos] * c + ch];
    const Tensor a = reduce_mean_spatial(t), b = reduce_mean_spatial(p);
    for (std::size_t i = 0; i < a.size(); ++i) EXPECT_NEAR(a[i], b[i], 1e-6);
  }
}

TEST(Shapes, OutputShapeDependsOnlyOnInputShape) {
  Rng rng(4);
  const Tensor a = oracle::random_tensor(rng, {3, 4, 5, 6});
  const Tensor b = oracle::random_tensor(rng, {3, 4, 5, 6});
  EXPECT_EQ(reduce_mean_spatial(a).shape(), reduce_mean_spatial(b).shape());
  EXPECT_EQ(map_elementwise(a, [](float x) { return x * x; }).shape(), b.shape());
}

TEST(Finite, OpsKeepFiniteInputsFinite) {
  Rng rng(5);
  const Tensor t = oracle::random_tensor(rng, {2, 5, 5, 3}, -1e30, 1e30);
  for (float v : reduce_mean_spatial(t).data()) EXPECT_TRUE(std::isfinite(v));
}
