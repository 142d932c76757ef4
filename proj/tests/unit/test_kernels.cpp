#include <gtest/gtest.h>

#include <cstring>

#include "oracles/oracles.hpp"
#include "pfnet/error.hpp"
#include "pfnet/kernels.hpp"
#include "support/test_util.hpp"

namespace pfnet {
namespace {

using testutil::random_tensor;
namespace ref = kernels::reference;
namespace par = kernels::parallel;

struct ConvCase {
  Shape x;
  Shape w;
  kernels::ConvGeometry g;
};

std::vector<ConvCase> conv_cases() {
  return {
      {{1, 3, 8, 8}, {4, 3, 3, 3}, {1, 1, 1}},
      {{2, 5, 9, 7}, {3, 5, 3, 3}, {2, 1, 1}},
      {{2, 4, 12, 12}, {6, 4, 3, 3}, {1, 4, 4}},
      {{1, 2, 10, 6}, {2, 2, 7, 7}, {1, 3, 1}},
      {{3, 6, 5, 5}, {8, 6, 1, 1}, {1, 0, 1}},
      {{1, 3, 16, 16}, {2, 3, 7, 7}, {2, 3, 1}},
      {{2, 8, 32, 32}, {16, 8, 3, 3}, {1, 2, 2}},
  };
}

bool bit_equal(const Tensor& a, const Tensor& b) {
  if (!(a.shape() == b.shape())) return false;
  for (std::size_t i = 0; i < a.size(); ++i)
    if (std::memcmp(a.data() + i, b.data() + i, sizeof(double)) != 0) return false;
  return true;
}

TEST(Kernels, ConvOutExtent) {
  EXPECT_EQ(kernels::conv_out_extent(64, 3, {2, 1, 1}), 32);
  EXPECT_EQ(kernels::conv_out_extent(13, 7, {1, 3, 1}), 13);
  EXPECT_EQ(kernels::conv_out_extent(8, 3, {1, 4, 4}), 8);
}

TEST(Kernels, ParallelConvMatchesReferenceBitForBit) {
  testutil::Rng rng(1);
  for (const auto& c : conv_cases()) {
    const Tensor x = random_tensor(c.x, rng), w = random_tensor(c.w, rng);
    const Tensor bias = random_tensor({c.w.n, 1, 1, 1}, rng);
    const Shape os = kernels::conv_out_shape(c.x, c.w, c.g);
    const Tensor dy = random_tensor(os, rng);
    for (int threads : {1, 2, 3}) {
      kernels::set_num_threads(threads);
      Tensor y1(os), y2(os), dx1(c.x), dx2(c.x), dw1(c.w), dw2(c.w);
      ref::conv2d_forward(x, w, bias.data(), c.g, y1);
      par::conv2d_forward(x, w, bias.data(), c.g, y2);
      EXPECT_TRUE(bit_equal(y1, y2)) << c.x.str() << " threads " << threads;
      ref::conv2d_backward_input(dy, w, c.g, dx1);
      par::conv2d_backward_input(dy, w, c.g, dx2);
      EXPECT_TRUE(bit_equal(dx1, dx2)) << c.x.str();
      ref::conv2d_backward_weight(dy, x, c.g, dw1);
      par::conv2d_backward_weight(dy, x, c.g, dw2);
      EXPECT_TRUE(bit_equal(dw1, dw2)) << c.x.str();
    }
  }
  kernels::set_num_threads(1);
}

TEST(Kernels, ConvMatchesSlidingWindowOracle) {
  testutil::Rng rng(2);
  for (int dilation : {1, 2, 4}) {
    for (int k : {1, 3, 5, 7}) {
      const Tensor x = random_tensor({2, 3, 9, 11}, rng);
      const Tensor w = random_tensor({4, 3, k, k}, rng);
      kernels::ConvGeometry g{1, dilation * (k - 1) / 2, dilation};
      Tensor y(kernels::conv_out_shape(x.shape(), w.shape(), g));
      par::conv2d_forward(x, w, nullptr, g, y);
      EXPECT_LT(max_abs_diff(y, oracle::conv_same(x, w, dilation)), 1e-12);
    }
  }
}

TEST(Kernels, ConvBackwardIsAdjointOfForward) {
  // <conv(x, w), dy> == <x, dX(dy)> == <w, dW(dy)>
  testutil::Rng rng(3);
  for (const auto& c : conv_cases()) {
    const Tensor x = random_tensor(c.x, rng), w = random_tensor(c.w, rng);
    const Shape os = kernels::conv_out_shape(c.x, c.w, c.g);
    const Tensor dy = random_tensor(os, rng);
    Tensor y(os), dx(c.x), dw(c.w);
    par::conv2d_forward(x, w, nullptr, c.g, y);
    par::conv2d_backward_input(dy, w, c.g, dx);
    par::conv2d_backward_weight(dy, x, c.g, dw);
    double lhs = 0.0, rx = 0.0, rw = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) lhs += y[i] * dy[i];
    for (std::size_t i = 0; i < x.size(); ++i) rx += x[i] * dx[i];
    for (std::size_t i = 0; i < w.size(); ++i) rw += w[i] * dw[i];
    EXPECT_NEAR(lhs, rx, 1e-9 * std::max(1.0, std::abs(lhs)));
    EXPECT_NEAR(lhs, rw, 1e-9 * std::max(1.0, std::abs(lhs)));
  }
}

TEST(Kernels, BilinearMatchesOracleAndParallel) {
  testutil::Rng rng(4);
  const std::vector<std::pair<Shape, std::pair<int, int>>> cases = {
      {{1, 2, 4, 4}, {8, 8}}, {{2, 3, 3, 5}, {6, 10}}, {{1, 1, 7, 3}, {2, 9}},
      {{1, 4, 2, 2}, {64, 64}}, {{1, 1, 16, 16}, {5, 7}}, {{1, 1, 1, 1}, {4, 4}}};
  for (const auto& [s, out] : cases) {
    const Tensor x = random_tensor(s, rng);
    Tensor a(Shape{s.n, s.c, out.first, out.second}), b = a;
    ref::bilinear_forward(x, a);
    par::bilinear_forward(x, b);
    EXPECT_TRUE(bit_equal(a, b));
    EXPECT_LT(max_abs_diff(a, oracle::bilinear(x, out.first, out.second)), 1e-14);

    const Tensor dy = random_tensor(a.shape(), rng);
    Tensor d1(s), d2(s);
    ref::bilinear_backward(dy, d1);
    par::bilinear_backward(dy, d2);
    EXPECT_TRUE(bit_equal(d1, d2));
    double lhs = 0.0, rhs = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) lhs += a[i] * dy[i];
    for (std::size_t i = 0; i < x.size(); ++i) rhs += x[i] * d1[i];
    EXPECT_NEAR(lhs, rhs, 1e-10);
  }
}

TEST(Kernels, BilinearPreservesConstants) {
  Tensor x(Shape{1, 1, 3, 5}, 0.7);
  Tensor y(Shape{1, 1, 12, 4});
  par::bilinear_forward(x, y);
  for (double v : y.values()) EXPECT_DOUBLE_EQ(v, 0.7);
}

TEST(Kernels, MatmulMatchesNaive) {
  testutil::Rng rng(5);
  for (bool ta : {false, true})
    for (bool tb : {false, true}) {
      const int B = 2, m = 3, k = 5, n = 4;
      const Tensor a = random_tensor(ta ? Shape{B, 1, k, m} : Shape{B, 1, m, k}, rng);
      const Tensor b = random_tensor(tb ? Shape{B, 1, n, k} : Shape{B, 1, k, n}, rng);
      Tensor c1(Shape{B, 1, m, n}), c2 = c1;
      ref::batched_matmul(a, ta, b, tb, c1);
      par::batched_matmul(a, ta, b, tb, c2);
      EXPECT_TRUE(bit_equal(c1, c2));
      for (int bb = 0; bb < B; ++bb)
        for (int i = 0; i < m; ++i)
          for (int j = 0; j < n; ++j) {
            double acc = 0.0;
            for (int p = 0; p < k; ++p) {
              const double av = ta ? a.at(bb, 0, p, i) : a.at(bb, 0, i, p);
              const double bv = tb ? b.at(bb, 0, j, p) : b.at(bb, 0, p, j);
              acc += av * bv;
            }
            EXPECT_NEAR(c1.at(bb, 0, i, j), acc, 1e-13);
          }
    }
}

TEST(Kernels, RejectsMismatchedShapes) {
  Tensor x(Shape{1, 3, 8, 8}), w(Shape{2, 4, 3, 3}), y(Shape{1, 2, 8, 8});
  EXPECT_THROW(par::conv2d_forward(x, w, nullptr, {1, 1, 1}, y), DimensionError);
}

}  // namespace
}  // namespace pfnet
