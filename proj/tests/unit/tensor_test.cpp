#include <gtest/gtest.h>

#include <cmath>
#include <limits>

#include "twnn/error.hpp"
#include "twnn/rng.hpp"
#include "twnn/tensor.hpp"

namespace {

using twnn::ErrorKind;
using twnn::Tensor;

template <class F>
ErrorKind kind_of(F&& f) {
  try {
    f();
  } catch (const twnn::Error& e) {
    return e.kind();
  }
  ADD_FAILURE() << "no twnn::Error thrown";
  return ErrorKind::Io;
}

Tensor naive_matmul(const Tensor& a, const Tensor& b) {
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  Tensor c = Tensor::zeros({m, n});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      double s = 0.0;
      for (std::size_t p = 0; p < k; ++p) s += a.data()[i * k + p] * b.data()[p * n + j];
      c.data()[i * n + j] = s;
    }
  return c;
}

TEST(Tensor, ConstructionChecksSize) {
  EXPECT_EQ(kind_of([] { Tensor({2, 3}, std::vector<double>(5)); }), ErrorKind::ShapeMismatch);
  const Tensor s = Tensor::scalar(4.0);
  EXPECT_EQ(s.rank(), 0u);
  EXPECT_EQ(s.size(), 1u);
  EXPECT_EQ(s.item(), 4.0);
  EXPECT_EQ(kind_of([] { Tensor::matrix({{1, 2}, {3}}); }), ErrorKind::ShapeMismatch);
}

TEST(Tensor, MatmulIdentity) {
  const Tensor a = Tensor::matrix({{1, 2}, {3, 4}});
  EXPECT_EQ(twnn::matmul(Tensor::identity(2), a), a);
}

TEST(Tensor, MatmulHandProduct) {
  const Tensor c = twnn::matmul(Tensor::matrix({{1, 2}}), Tensor::matrix({{3}, {4}}));
  EXPECT_EQ(c.shape(), (twnn::Shape{1, 1}));
  EXPECT_EQ(c.item(), 11.0);
}

TEST(Tensor, MatmulMatchesTripleLoop) {
  twnn::Rng rng(11);
  const Tensor a = rng.uniform_tensor({4, 5}, -1, 1);
  const Tensor b = rng.uniform_tensor({5, 3}, -1, 1);
  const Tensor c = twnn::matmul(a, b);
  const Tensor ref = naive_matmul(a, b);
  ASSERT_EQ(c.shape(), (twnn::Shape{4, 3}));
  for (std::size_t i = 0; i < c.size(); ++i) EXPECT_NEAR(c[i], ref[i], 1e-12);
}

TEST(Tensor, MatmulInnerMismatch) {
  EXPECT_EQ(kind_of([] { twnn::matmul(Tensor::zeros({2, 3}), Tensor::zeros({2, 3})); }), ErrorKind::ShapeMismatch);
  EXPECT_EQ(kind_of([] { twnn::matmul(Tensor::zeros({3}), Tensor::zeros({3, 1})); }), ErrorKind::ShapeMismatch);
}

TEST(Tensor, MatmulAssociative) {
  twnn::Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor a = rng.uniform_tensor({3, 4}, -1, 1);
    const Tensor b = rng.uniform_tensor({4, 2}, -1, 1);
    const Tensor c = rng.uniform_tensor({2, 5}, -1, 1);
    const Tensor l = twnn::matmul(twnn::matmul(a, b), c);
    const Tensor r = twnn::matmul(a, twnn::matmul(b, c));
    EXPECT_LE(twnn::norm_inf_diff(l, r), 1e-10 * std::max(1.0, twnn::norm_inf(l)));
  }
}

TEST(Tensor, ElementwiseBasics) {
  EXPECT_EQ(twnn::sigmoid(Tensor::scalar(0.0)).item(), 0.5);
  EXPECT_EQ(twnn::tanh(Tensor::scalar(0.0)).item(), 0.0);
  const Tensor a = Tensor::vector({1, 2, 3});
  const Tensor b = Tensor::vector({4, 5, 6});
  EXPECT_EQ(twnn::add(a, b), Tensor::vector({5, 7, 9}));
  EXPECT_EQ(twnn::sub(b, a), Tensor::vector({3, 3, 3}));
  EXPECT_EQ(twnn::mul(a, b), Tensor::vector({4, 10, 18}));
  EXPECT_EQ(twnn::scale(a, 2.0), Tensor::vector({2, 4, 6}));
  EXPECT_EQ(twnn::square(a), Tensor::vector({1, 4, 9}));
}

TEST(Tensor, SigmoidMatchesHighPrecision) {
  const long double ref = 1.0L / (1.0L + std::exp(-3.0L));
  EXPECT_NEAR(twnn::sigmoid(Tensor::scalar(3.0)).item(), static_cast<double>(ref), 1e-15);
  EXPECT_NEAR(twnn::sigmoid(3.0), static_cast<double>(ref), 1e-15);
  // Large negative inputs do not overflow.
  EXPECT_TRUE(twnn::sigmoid(Tensor::scalar(-800.0)).all_finite());
  EXPECT_EQ(twnn::sigmoid(800.0), 1.0);
}

TEST(Tensor, ScalarBroadcastOnly) {
  const Tensor a = Tensor::vector({1, 2});
  EXPECT_EQ(twnn::mul(Tensor::scalar(3.0), a), Tensor::vector({3, 6}));
  EXPECT_EQ(twnn::add(a, Tensor::scalar(1.0)), Tensor::vector({2, 3}));
  EXPECT_EQ(kind_of([&] { twnn::add(a, Tensor::vector({1, 2, 3})); }), ErrorKind::ShapeMismatch);
  EXPECT_EQ(kind_of([&] { twnn::mul(Tensor::zeros({2, 1}), Tensor::zeros({1, 2})); }), ErrorKind::ShapeMismatch);
}

TEST(Tensor, BiasAddAndRowSum) {
  const Tensor m = Tensor::matrix({{1, 2, 3}, {4, 5, 6}});
  EXPECT_EQ(twnn::bias_add(m, Tensor::vector({10, 20})), Tensor::matrix({{11, 12, 13}, {24, 25, 26}}));
  EXPECT_EQ(twnn::row_sum(m), Tensor::vector({6, 15}));
  EXPECT_EQ(kind_of([&] { twnn::bias_add(m, Tensor::vector({1, 2, 3})); }), ErrorKind::ShapeMismatch);
}

TEST(Tensor, Reductions) {
  const Tensor m = Tensor::matrix({{1, 2}, {3, 6}});
  EXPECT_EQ(twnn::sum(m).item(), 12.0);
  EXPECT_EQ(twnn::mean(m).item(), 3.0);
  EXPECT_EQ(twnn::sum(m).rank(), 0u);
}

TEST(Tensor, NormInfDiff) {
  const Tensor a = Tensor::vector({1, 2});
  EXPECT_EQ(twnn::norm_inf_diff(a, a), 0.0);
  EXPECT_EQ(twnn::norm_inf_diff(a, Tensor::vector({1.5, 2})), 0.5);
  EXPECT_EQ(kind_of([&] { twnn::norm_inf_diff(a, Tensor::vector({1})); }), ErrorKind::ShapeMismatch);
}

TEST(Tensor, NormInfDiffMatchesScanAndIsSymmetric) {
  twnn::Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor a = rng.uniform_tensor({3, 7}, -5, 5);
    const Tensor b = rng.uniform_tensor({3, 7}, -5, 5);
    double scan = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) scan = std::max(scan, std::abs(a[i] - b[i]));
    EXPECT_EQ(twnn::norm_inf_diff(a, b), scan);
    EXPECT_EQ(twnn::norm_inf_diff(a, b), twnn::norm_inf_diff(b, a));
    EXPECT_GT(twnn::norm_inf_diff(a, b), 0.0);
  }
}

TEST(Tensor, TransposeAndInner) {
  const Tensor m = Tensor::matrix({{1, 2, 3}, {4, 5, 6}});
  EXPECT_EQ(twnn::transpose(m), Tensor::matrix({{1, 4}, {2, 5}, {3, 6}}));
  EXPECT_EQ(twnn::inner(Tensor::vector({1, 2}), Tensor::vector({3, 4})), 11.0);
  EXPECT_DOUBLE_EQ(twnn::norm_l2(Tensor::vector({3, 4})), 5.0);
}

TEST(Tensor, CopiesAreIndependent) {
  Tensor a = Tensor::vector({1, 2});
  Tensor b = a;
  b[0] = 9;
  EXPECT_EQ(a[0], 1.0);
}

}  // namespace

namespace {

TEST(Norms, NanPropagates) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  const twnn::Tensor a = twnn::Tensor::vector({1, nan, 3});
  EXPECT_TRUE(std::isnan(twnn::norm_inf(a)));
  EXPECT_TRUE(std::isnan(twnn::norm_inf_diff(a, twnn::Tensor::zeros({3}))));
  EXPECT_TRUE(std::isnan(twnn::norm_inf_diff(twnn::Tensor::vector({nan, 5}), twnn::Tensor::zeros({2}))));
}

}  // namespace
