#include <gtest/gtest.h>

#include <cmath>
#include <limits>
#include <optional>

#include "twnn/error.hpp"
#include "twnn/fixpoint.hpp"
#include "twnn/models.hpp"
#include "twnn/oracles.hpp"
#include "twnn/rng.hpp"

namespace {

using twnn::ErrorKind;
using twnn::FixConfig;
using twnn::LeafSet;
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

FixConfig tight() {
  FixConfig c;
  c.tolerance = 1e-13;
  c.max_iter = 20000;
  return c;
}

struct Seeded {
  twnn::ResidualMap map{twnn::Activation::Tanh};
  LeafSet inputs;
  Tensor x0;
};

// Residual tanh map with weights small enough to contract.
Seeded seeded_residual(std::uint64_t seed, std::size_t d = 4, std::size_t batch = 3) {
  twnn::Rng rng(seed);
  Seeded s;
  twnn::MlpParams p = twnn::MlpParams::contractive_init(d, 6, d, rng, 0.5);
  p.b1 = rng.uniform_tensor({6}, -0.3, 0.3);
  p.b2 = rng.uniform_tensor({d}, -0.3, 0.3);
  s.inputs = p.leaves();
  s.inputs.set(twnn::leaf::kInput, rng.uniform_tensor({d, batch}, -1, 1));
  s.x0 = Tensor::zeros({d, batch});
  return s;
}

TEST(FixConfig, Validation) {
  FixConfig c;
  EXPECT_NO_THROW(c.validate());
  c.tolerance = 0;
  EXPECT_EQ(kind_of([&] { c.validate(); }), ErrorKind::InvalidArgument);
  c = {};
  c.max_iter = 0;
  EXPECT_EQ(kind_of([&] { c.validate(); }), ErrorKind::InvalidArgument);
  c = {};
  c.damping = 0;
  EXPECT_EQ(kind_of([&] { c.validate(); }), ErrorKind::InvalidArgument);
  c.damping = 1.5;
  EXPECT_EQ(kind_of([&] { c.validate(); }), ErrorKind::InvalidArgument);
  c = {};
  c.divergence_patience = 0;
  EXPECT_EQ(kind_of([&] { c.validate(); }), ErrorKind::InvalidArgument);
}

TEST(FixForward, GeometricContraction) {
  FixConfig c;
  c.tolerance = 1e-6;
  const auto r = twnn::fix_forward([](const Tensor& z) { return twnn::add(twnn::scale(z, 0.5), Tensor::scalar(1)); },
                                   Tensor::scalar(0), c);
  EXPECT_LE(std::abs(r.z.item() - 2.0), 2e-6);
  EXPECT_EQ(r.iterations, 21);
  EXPECT_TRUE(r.converged);
  // Closed form: z_t = 2 (1 - 0.5^t), step_t = 2 * 0.5^t.
  ASSERT_EQ(r.residual_history.size(), 21u);
  for (int t = 1; t <= 21; ++t) EXPECT_NEAR(r.residual_history[t - 1], 2.0 * std::pow(0.5, t), 1e-15);
}

TEST(FixForward, IdentityConvergesImmediately) {
  const auto r = twnn::fix_forward([](const Tensor& z) { return z; }, Tensor::vector({3, -1}), FixConfig{});
  EXPECT_EQ(r.iterations, 1);
  EXPECT_EQ(r.final_residual, 0.0);
  EXPECT_TRUE(r.converged);
}

TEST(FixForward, NetFixedPointSatisfiesResidual) {
  twnn::Rng rng(17);
  const twnn::NetMap g;
  LeafSet inputs = twnn::MlpParams::contractive_init(3, 5, 3, rng).leaves();
  inputs.set(twnn::leaf::kInput, rng.uniform_tensor({3, 4}, -1, 1));
  FixConfig c;
  const auto r = twnn::fix_forward(g, inputs, Tensor::zeros({3, 4}), c);
  ASSERT_TRUE(r.converged);
  LeafSet all = inputs;
  all.set(twnn::leaf::kState, r.z);
  EXPECT_LE(twnn::norm_inf_diff(g(all), r.z), c.tolerance);
}

TEST(FixForward, ResultInvariants) {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const Seeded s = seeded_residual(seed);
    FixConfig c;
    c.tolerance = 1e-8;
    const auto r = twnn::fix_forward(s.map, s.inputs, s.x0, c);
    EXPECT_EQ(r.converged, r.final_residual <= c.tolerance);
    EXPECT_LE(r.iterations, c.max_iter);
    ASSERT_EQ(r.residual_history.size(), static_cast<std::size_t>(r.iterations));
    EXPECT_EQ(r.residual_history.back(), r.final_residual);
    for (std::size_t i = 0; i + 1 < r.residual_history.size(); ++i) EXPECT_GT(r.residual_history[i], c.tolerance);
  }
}

TEST(FixForward, MaxIterIsNormalExit) {
  FixConfig c;
  c.max_iter = 5;
  c.tolerance = 1e-12;
  const auto r = twnn::fix_forward([](const Tensor& z) { return twnn::add(twnn::scale(z, 0.9), Tensor::scalar(1)); },
                                   Tensor::scalar(0), c);
  EXPECT_FALSE(r.converged);
  EXPECT_EQ(r.iterations, 5);
}

TEST(FixForward, DivergenceDetected) {
  FixConfig c;
  EXPECT_EQ(kind_of([&] {
              twnn::fix_forward([](const Tensor& z) { return twnn::add(twnn::scale(z, 2.0), Tensor::scalar(1)); },
                                Tensor::scalar(0), c);
            }),
            ErrorKind::Diverged);
  EXPECT_EQ(kind_of([&] {
              twnn::fix_forward(
                  [](const Tensor& z) { return twnn::add(z, Tensor::scalar(std::numeric_limits<double>::quiet_NaN())); },
                  Tensor::scalar(0), c);
            }),
            ErrorKind::Diverged);
}

TEST(FixForward, SlowGrowthBelowThresholdIsNotDivergence) {
  FixConfig c;
  c.max_iter = 50;
  // Residual grows every step but stays far below the divergence magnitude.
  const auto r = twnn::fix_forward([](const Tensor& z) { return twnn::add(twnn::scale(z, 1.01), Tensor::scalar(1e-2)); },
                                   Tensor::scalar(0), c);
  EXPECT_FALSE(r.converged);
  EXPECT_EQ(r.iterations, 50);
}

TEST(FixForward, ShapeChangeRejected) {
  EXPECT_EQ(kind_of([] { twnn::fix_forward([](const Tensor&) { return Tensor::zeros({3}); }, Tensor::zeros({2}), {}); }),
            ErrorKind::ShapeMismatch);
}

TEST(FixForward, DampingTamesOscillation) {
  auto g = [](const Tensor& z) { return twnn::sub(Tensor::scalar(2), z); };
  FixConfig c;
  c.max_iter = 100;
  EXPECT_FALSE(twnn::fix_forward(g, Tensor::scalar(0), c).converged);
  c.damping = 0.5;
  const auto r = twnn::fix_forward(g, Tensor::scalar(0), c);
  EXPECT_TRUE(r.converged);
  EXPECT_DOUBLE_EQ(r.z.item(), 1.0);
}

TEST(FixForward, WarmStartMonotonicity) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const Seeded s = seeded_residual(seed);
    const auto cold = twnn::fix_forward(s.map, s.inputs, s.x0, FixConfig{});
    const auto exact = twnn::fix_forward(s.map, s.inputs, cold.z, FixConfig{});
    EXPECT_EQ(exact.iterations, 1);
    twnn::Rng rng(seed + 100);
    const Tensor nudged = cold.z + rng.uniform_tensor(cold.z.shape(), -1e-3, 1e-3);
    EXPECT_LE(twnn::fix_forward(s.map, s.inputs, nudged, FixConfig{}).iterations, cold.iterations);
  }
}

TEST(FixForward, ContractiveResidualEventuallyDecreases) {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const Seeded s = seeded_residual(seed);
    FixConfig c;
    c.tolerance = 1e-8;
    const auto r = twnn::fix_forward(s.map, s.inputs, s.x0, c);
    ASSERT_TRUE(r.converged);
    EXPECT_LT(twnn::oracles::jacobian_norm_estimate(s.map, r.z, s.inputs), 1.0);
    const auto& h = r.residual_history;
    // Strictly decreasing over the tail.
    for (std::size_t i = h.size() / 2; i + 1 < h.size(); ++i) EXPECT_LT(h[i + 1], h[i]);
  }
}

TEST(FixTangent, LinearScalar) {
  const twnn::LinearMap g(0.5);
  const LeafSet inputs{{"x", Tensor::scalar(1)}};
  const auto fwd = twnn::fix_forward(g, inputs, Tensor::scalar(0), tight());
  const auto t = twnn::fix_tangent(g, fwd.z, inputs, LeafSet{{"x", Tensor::scalar(1)}}, tight());
  EXPECT_NEAR(t.tangent.item(), 2.0, 1e-12);
  EXPECT_TRUE(t.converged);
  EXPECT_FALSE(t.approximate);
  const auto zero = twnn::fix_tangent(g, fwd.z, inputs, LeafSet{{"x", Tensor::scalar(0)}}, tight());
  EXPECT_EQ(zero.tangent.item(), 0.0);
}

TEST(FixTangent, MlpMatchesReSolveDifferences) {
  const Seeded s = seeded_residual(3);
  const auto fwd = twnn::fix_forward(s.map, s.inputs, s.x0, tight());
  twnn::Rng rng(31);
  const Tensor xdot = rng.uniform_tensor(s.inputs.at("x").shape(), -1, 1);
  const Tensor t = twnn::fix_tangent(s.map, fwd.z, s.inputs, LeafSet{{"x", xdot}}, tight()).tangent;

  const double h = 1e-5;
  LeafSet up = s.inputs, down = s.inputs;
  up.at("x") = s.inputs.at("x") + h * xdot;
  down.at("x") = s.inputs.at("x") - h * xdot;
  const Tensor zu = twnn::fix_forward(s.map, up, fwd.z, tight()).z;
  const Tensor zd = twnn::fix_forward(s.map, down, fwd.z, tight()).z;
  const Tensor fd = (1.0 / (2 * h)) * (zu - zd);
  EXPECT_LE(twnn::norm_inf_diff(t, fd) / twnn::norm_inf(fd), 1e-4);
}

TEST(FixTangent, UnconvergedForwardFlagsApproximate) {
  const twnn::LinearMap g(0.5);
  const auto t = twnn::fix_tangent(g, Tensor::scalar(0), LeafSet{{"x", Tensor::scalar(1)}},
                                   LeafSet{{"x", Tensor::scalar(1)}}, tight(), false);
  EXPECT_TRUE(t.approximate);
}

TEST(FixAdjoint, LinearScalarClosedForm) {
  const twnn::LinearMap g(0.5);
  const LeafSet inputs{{"x", Tensor::scalar(1)}};
  const auto fwd = twnn::fix_forward(g, inputs, Tensor::scalar(0), tight());
  const auto a = twnn::fix_adjoint(g, fwd.z, inputs, Tensor::scalar(1), tight());
  EXPECT_NEAR(a.adjoint_state.item(), 1.0, 1e-12);
  EXPECT_NEAR(a.leaf_cotangents.at("x").item(), 2.0, 1e-10);
  EXPECT_TRUE(a.adjoint_converged);
  EXPECT_FALSE(a.approximate_gradient);
  EXPECT_FALSE(a.leaf_cotangents.contains("z"));
}

TEST(FixAdjoint, ZeroCotangent) {
  const Seeded s = seeded_residual(4);
  const auto fwd = twnn::fix_forward(s.map, s.inputs, s.x0, FixConfig{});
  const auto a = twnn::fix_adjoint(s.map, fwd.z, s.inputs, Tensor::zeros(fwd.z.shape()), FixConfig{});
  EXPECT_EQ(a.adjoint_iterations, 1);
  for (const auto& t : a.leaf_cotangents.values()) EXPECT_EQ(t, Tensor::zeros(t.shape()));
}

TEST(FixAdjoint, MlpMatchesReSolveFiniteDifferences) {
  for (std::uint64_t seed = 1; seed <= 3; ++seed) {
    const Seeded s = seeded_residual(seed, 3, 2);
    const auto fwd = twnn::fix_forward(s.map, s.inputs, s.x0, tight());
    twnn::Rng rng(seed * 7);
    const Tensor zbar = rng.uniform_tensor(fwd.z.shape(), -1, 1);
    const auto a = twnn::fix_adjoint(s.map, fwd.z, s.inputs, zbar, tight());
    const auto fd = twnn::oracles::fd_gradient(
        [&](const LeafSet& l) { return twnn::inner(zbar, twnn::fix_forward(s.map, l, fwd.z, tight()).z); }, s.inputs);
    const auto rep = twnn::oracles::compare_bundles("fd", fd, a.leaf_cotangents, 1e-4);
    EXPECT_TRUE(rep.pass) << rep.max_rel_error;
  }
}

TEST(FixAdjoint, MaxIterFlagsApproximate) {
  const twnn::LinearMap g(0.5);
  FixConfig c;
  c.max_iter = 1;
  const auto a = twnn::fix_adjoint(g, Tensor::scalar(2), LeafSet{{"x", Tensor::scalar(1)}}, Tensor::scalar(1), c);
  EXPECT_FALSE(a.adjoint_converged);
  EXPECT_TRUE(a.approximate_gradient);
  EXPECT_LE(a.adjoint_iterations, c.max_iter);
}

TEST(FixAdjoint, UnconvergedForwardFlagsApproximate) {
  const twnn::LinearMap g(0.5);
  const auto a =
      twnn::fix_adjoint(g, Tensor::scalar(2), LeafSet{{"x", Tensor::scalar(1)}}, Tensor::scalar(1), tight(), false);
  EXPECT_TRUE(a.adjoint_converged);
  EXPECT_TRUE(a.approximate_gradient);
}

TEST(FixAdjoint, ExpansiveAdjointDiverges) {
  const twnn::LinearMap g(2.0);
  EXPECT_EQ(kind_of([&] {
              twnn::fix_adjoint(g, Tensor::scalar(0), LeafSet{{"x", Tensor::scalar(1)}}, Tensor::scalar(1), FixConfig{});
            }),
            ErrorKind::Diverged);
}

TEST(FixAdjoint, WrongCotangentShape) {
  const twnn::LinearMap g(0.5);
  EXPECT_EQ(kind_of([&] {
              twnn::fix_adjoint(g, Tensor::scalar(2), LeafSet{{"x", Tensor::scalar(1)}}, Tensor::vector({1, 2}), {});
            }),
            ErrorKind::ShapeMismatch);
}

TEST(FixDuality, TangentAndAdjointAreMutuallyAdjoint) {
  const Seeded s = seeded_residual(9);
  const auto fwd = twnn::fix_forward(s.map, s.inputs, s.x0, tight());
  twnn::Rng rng(5);
  for (int trial = 0; trial < 20; ++trial) {
    LeafSet xdot;
    for (std::size_t i = 0; i < s.inputs.size(); ++i) {
      xdot.set(s.inputs.name(i), rng.uniform_tensor(s.inputs.value(i).shape(), -1, 1));
    }
    const Tensor zbar = rng.uniform_tensor(fwd.z.shape(), -1, 1);
    const double lhs = twnn::inner(zbar, twnn::fix_tangent(s.map, fwd.z, s.inputs, xdot, tight()).tangent);
    const auto ct = twnn::fix_adjoint(s.map, fwd.z, s.inputs, zbar, tight()).leaf_cotangents;
    double rhs = 0.0;
    for (std::size_t i = 0; i < xdot.size(); ++i) rhs += twnn::inner(ct.at(xdot.name(i)), xdot.value(i));
    EXPECT_LE(std::abs(lhs - rhs) / std::max(std::abs(lhs), 1e-12), 1e-8);
  }
}

TEST(FixBlock, ChainRuleScalar) {
  const twnn::LinearMap g(0.5);
  auto block = twnn::fix_block(g, LeafSet{{"x", Tensor::scalar(1)}}, Tensor::scalar(0), tight());
  const double z = block.forward.z.item();
  EXPECT_NEAR(z, 2.0, 1e-12);
  // L = z^2, dL/dz = 2z.
  const auto a = block.pullback(Tensor::scalar(2 * z));
  EXPECT_NEAR(a.leaf_cotangents.at("x").item(), 8.0, 1e-10);
  const auto zero = block.pullback(Tensor::scalar(0));
  EXPECT_EQ(zero.leaf_cotangents.at("x").item(), 0.0);
}

TEST(FixBlock, PullbackMatchesUnrolledBackprop) {
  twnn::Rng rng(12);
  const twnn::NetMap g;
  LeafSet inputs = twnn::MlpParams::contractive_init(3, 5, 3, rng).leaves();
  inputs.set(twnn::leaf::kInput, rng.uniform_tensor({3, 4}, -1, 1));
  const Tensor targets = rng.uniform_tensor({3, 4}, 0, 1);
  const Tensor x0 = Tensor::zeros({3, 4});
  auto block = twnn::fix_block(g, inputs, x0, tight());
  ASSERT_TRUE(block.forward.converged);
  const twnn::MseMap loss;
  const Tensor zbar = twnn::grad(loss, LeafSet{{"z", block.forward.z}, {"targets", targets}}).at("z");
  const auto implicit = block.pullback(zbar);
  const auto unrolled = twnn::oracles::unrolled_fix_gradient(g, x0, inputs, tight(), zbar);
  for (std::size_t i = 0; i < unrolled.size(); ++i) {
    EXPECT_LE(twnn::norm_inf_diff(unrolled.value(i), implicit.leaf_cotangents.at(unrolled.name(i))), 1e-6);
  }
}

TEST(FixBlock, PullbackIsReentrantAndOutlivesMap) {
  twnn::FixPullback* keep = nullptr;
  std::optional<twnn::FixBlock> block;
  {
    const twnn::LinearMap g(0.5);
    block.emplace(twnn::fix_block(g, LeafSet{{"x", Tensor::scalar(1)}}, Tensor::scalar(0), tight()));
    keep = &block->pullback;
  }
  const auto a = (*keep)(Tensor::scalar(1));
  const auto b = (*keep)(Tensor::scalar(1));
  EXPECT_EQ(a.leaf_cotangents, b.leaf_cotangents);
  EXPECT_NEAR(a.leaf_cotangents.at("x").item(), 2.0, 1e-10);
}

}  // namespace
