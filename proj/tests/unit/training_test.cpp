#include <gtest/gtest.h>

#include <cmath>
#include <sstream>

#include "twnn/error.hpp"
#include "twnn/oracles.hpp"
#include "twnn/rng.hpp"
#include "twnn/training.hpp"

namespace {

using twnn::ErrorKind;
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

twnn::FixConfig tight() {
  twnn::FixConfig c;
  c.tolerance = 1e-13;
  c.max_iter = 10000;
  return c;
}

TEST(MseLoss, Examples) {
  EXPECT_EQ(twnn::mse_loss(Tensor::vector({3, -1}), Tensor::vector({3, -1})), 0.0);
  EXPECT_EQ(twnn::mse_loss(Tensor::vector({0, 0}), Tensor::vector({1, 1})), 1.0);
  EXPECT_EQ(kind_of([] { twnn::mse_loss(Tensor::vector({0}), Tensor::vector({0, 1})); }), ErrorKind::ShapeMismatch);
}

TEST(MseLoss, MatchesLoopOracle) {
  twnn::Rng rng(3);
  const Tensor p = rng.uniform_tensor({7, 5}, -3, 3), t = rng.uniform_tensor({7, 5}, -3, 3);
  long double s = 0;
  for (std::size_t i = 0; i < p.size(); ++i) s += (static_cast<long double>(p[i]) - t[i]) * (p[i] - t[i]);
  EXPECT_NEAR(twnn::mse_loss(p, t), static_cast<double>(s / p.size()), 1e-12);
}

TEST(SgdStep, Examples) {
  const LeafSet theta{{"a", Tensor::vector({1, -2})}};
  EXPECT_EQ(twnn::sgd_step(theta, LeafSet{{"a", Tensor::zeros({2})}}, 0.1), theta);
  EXPECT_EQ(twnn::sgd_step(LeafSet{{"a", Tensor::scalar(1)}}, LeafSet{{"a", Tensor::scalar(2)}}, 0.001).at("a").item(),
            1.0 - 0.001 * 2.0);
  EXPECT_EQ(kind_of([&] { twnn::sgd_step(theta, LeafSet{}, 0.1); }), ErrorKind::MissingGradient);
  EXPECT_EQ(kind_of([&] { twnn::sgd_step(theta, LeafSet{{"a", Tensor::zeros({3})}}, 0.1); }),
            ErrorKind::ShapeMismatch);
  // Extra gradients are ignored.
  EXPECT_NO_THROW(twnn::sgd_step(theta, LeafSet{{"a", Tensor::zeros({2})}, {"b", Tensor::scalar(1)}}, 0.1));
}

TEST(SgdStep, QuadraticGeometricDecay) {
  const double lr = 0.05;
  LeafSet theta{{"t", Tensor::scalar(1.0)}};
  double prev = 1.0;
  for (int k = 1; k <= 60; ++k) {
    theta = twnn::sgd_step(theta, LeafSet{{"t", Tensor::scalar(2.0 * theta.at("t").item())}}, lr);
    const double v = theta.at("t").item();
    EXPECT_NEAR(v, std::pow(1.0 - 2.0 * lr, k), 1e-14);
    EXPECT_LT(v, prev);
    prev = v;
  }
}

TEST(LossThroughFix, SelfTargetGivesZero) {
  twnn::Rng rng(9);
  const twnn::NetMap g;
  const LeafSet inputs = [&] {
    twnn::MlpParams p = twnn::MlpParams::contractive_init(3, 6, 3, rng);
    LeafSet l = p.leaves();
    l.set(twnn::leaf::kInput, rng.uniform_tensor({3, 2}, -1, 1));
    return l;
  }();
  const Tensor z = twnn::fix_forward(g, inputs, Tensor::zeros({3, 2}), tight()).z;
  const auto r = twnn::loss_through_fix(g, inputs, z, Tensor::zeros({3, 2}), tight());
  EXPECT_LE(r.loss, 1e-24);
  for (const auto& t : r.gradients.values()) EXPECT_LE(twnn::norm_inf(t), 1e-10);
}

TEST(LossThroughFix, ScalarLinearHandChain) {
  const twnn::LinearMap g(0.5);
  const auto r = twnn::loss_through_fix(g, LeafSet{{"x", Tensor::scalar(1)}}, Tensor::scalar(0), Tensor::scalar(0),
                                        tight());
  EXPECT_NEAR(r.loss, 4.0, 1e-10);
  EXPECT_NEAR(r.gradients.at("x").item(), 8.0, 1e-8);
}

TEST(LossThroughFix, MatchesPipelineFiniteDifferences) {
  twnn::Rng rng(21);
  const twnn::NetMap g;
  twnn::MlpParams p = twnn::MlpParams::contractive_init(3, 5, 3, rng);
  p.b1 = rng.uniform_tensor({5}, -0.5, 0.5);
  p.b2 = rng.uniform_tensor({3}, -0.5, 0.5);
  LeafSet inputs = p.leaves();
  inputs.set(twnn::leaf::kInput, rng.uniform_tensor({3, 4}, -1, 1));
  const Tensor targets = rng.uniform_tensor({3, 4}, 0, 1);
  const auto r = twnn::loss_through_fix(g, inputs, targets, Tensor::zeros({3, 4}), tight());

  const auto pipeline = [&](const LeafSet& l) {
    const Tensor z = twnn::oracles::solve_fixed_point(g, l, Tensor::zeros({3, 4}), 1e-15, 100000);
    return twnn::mse_loss(z, targets);
  };
  const auto fd = twnn::oracles::fd_gradient(pipeline, inputs, 1e-5);
  const auto report = twnn::oracles::compare_bundles("pipeline fd", fd, r.gradients, 1e-4, 1e-8);
  EXPECT_TRUE(report.pass) << report.max_rel_error;
}

TEST(LossThroughFix, ScalarGradientDescentTrajectory) {
  // x is trained; z* = 2x; loss (2x - t)^2; error e = 2x - t shrinks by (1 - 8 lr).
  const twnn::LinearMap g(0.5);
  const double lr = 0.01, t = 3.0;
  LeafSet x{{"x", Tensor::scalar(0.25)}};
  double e = 2 * 0.25 - t;
  double prev = INFINITY;
  for (int k = 0; k < 100; ++k) {
    const auto r = twnn::loss_through_fix(g, x, Tensor::scalar(t), Tensor::scalar(0), tight());
    EXPECT_NEAR(r.loss, e * e, 1e-9 * (1 + e * e)) << "step " << k;
    EXPECT_LT(r.loss, prev);
    prev = r.loss;
    x = twnn::sgd_step(x, r.gradients, lr);
    e *= 1.0 - 8.0 * lr;
  }
}

twnn::ResidualStack scalar_stack(std::size_t depth = 1) {
  twnn::ResidualStack s;
  for (std::size_t i = 0; i < depth; ++i) {
    twnn::EquilibriumBlock b;
    b.activation = twnn::Activation::Identity;
    b.params = twnn::MlpParams{Tensor::matrix({{0.3}}), Tensor::vector({0}), Tensor::matrix({{0.3}}),
                               Tensor::vector({0})};
    b.fix.tolerance = 1e-12;
    b.fix.max_iter = 1000;
    s.blocks.push_back(b);
  }
  return s;
}

twnn::Dataset linear_data(std::size_t n, double slope) {
  twnn::Dataset d{Tensor::zeros({n, 1}), Tensor::zeros({n, 1})};
  for (std::size_t i = 0; i < n; ++i) {
    d.inputs.at(i, 0) = -1.0 + 2.0 * static_cast<double>(i) / static_cast<double>(n - 1);
    d.targets.at(i, 0) = slope * d.inputs.at(i, 0);
  }
  return d;
}

twnn::TrainConfig scalar_config() {
  twnn::TrainConfig c;
  c.learning_rate = 0.05;
  c.tolerance = 1e-12;
  c.loss_threshold = 1e-3;
  c.batch_size = 16;
  c.max_iter = 1000;
  c.epochs = 100;
  c.seed = 4;
  return c;
}

TEST(Train, ZeroEpochsLeavesModelUnchanged) {
  auto model = scalar_stack();
  const auto before = model.blocks[0].params.leaves();
  auto c = scalar_config();
  c.epochs = 0;
  const auto r = twnn::train(model, linear_data(16, 1.5), c);
  EXPECT_TRUE(r.rows.empty());
  EXPECT_EQ(model.blocks[0].params.leaves(), before);
}

TEST(Train, ZeroLearningRateLeavesModelUnchanged) {
  auto model = scalar_stack(2);
  const auto before0 = model.blocks[0].params.leaves(), before1 = model.blocks[1].params.leaves();
  auto c = scalar_config();
  c.learning_rate = 0;
  c.epochs = 3;
  const auto r = twnn::train(model, linear_data(16, 1.5), c);
  EXPECT_FALSE(r.rows.empty());
  EXPECT_EQ(model.blocks[0].params.leaves(), before0);
  EXPECT_EQ(model.blocks[1].params.leaves(), before1);
}

TEST(Train, ScalarBlockLossDecreases) {
  auto model = scalar_stack();
  const auto r = twnn::train(model, linear_data(16, 1.5), scalar_config());
  ASSERT_EQ(r.rows.size(), 100u);
  for (std::size_t i = 1; i < r.rows.size(); ++i) {
    if (r.rows[i - 1].loss < 1e-12) break;
    EXPECT_LT(r.rows[i].loss, r.rows[i - 1].loss) << "step " << i;
  }
  EXPECT_LT(r.rows.back().loss, 1e-3 * r.rows.front().loss);
}

TEST(Train, RowsRespectBoundsAndOrder) {
  twnn::Rng rng(5);
  twnn::ResidualStack model;
  for (int i = 0; i < 3; ++i) {
    twnn::EquilibriumBlock b;
    b.params = twnn::MlpParams::contractive_init(4, 6, 4, rng, 0.5);
    b.fix.max_iter = 1 + 20 * i;
    model.blocks.push_back(b);
  }
  twnn::Dataset data{rng.uniform_tensor({40, 4}, -1, 1), rng.uniform_tensor({40, 4}, -1, 1)};
  auto c = scalar_config();
  c.max_iter = 30;
  c.tolerance = 1e-6;
  c.epochs = 2;
  c.batch_size = 8;
  const auto r = twnn::train(model, data, c);
  ASSERT_EQ(r.visits_per_batch.size(), 10u);
  for (std::size_t i = 0; i < r.rows.size(); ++i) {
    EXPECT_LE(r.rows[i].fix_iterations, 30);
    EXPECT_LE(r.rows[i].adjoint_iterations, 30);
    if (i > 0) {
      const auto& a = r.rows[i - 1];
      const auto& b = r.rows[i];
      EXPECT_TRUE(a.epoch < b.epoch || (a.epoch == b.epoch && a.batch <= b.batch));
    }
  }
  for (auto v : r.visits_per_batch) EXPECT_LE(v, 3u + 2u);
}

TEST(Train, DeterministicLossColumns) {
  twnn::Rng rng(8);
  twnn::ResidualStack base;
  for (int i = 0; i < 2; ++i) {
    twnn::EquilibriumBlock b;
    b.params = twnn::MlpParams::contractive_init(3, 5, 3, rng, 0.5);
    base.blocks.push_back(b);
  }
  twnn::Dataset data{rng.uniform_tensor({30, 3}, -1, 1), rng.uniform_tensor({30, 3}, -1, 1)};
  auto c = scalar_config();
  c.tolerance = 1e-6;
  c.epochs = 3;
  c.batch_size = 7;
  auto m1 = base, m2 = base;
  const auto r1 = twnn::train(m1, data, c), r2 = twnn::train(m2, data, c);
  ASSERT_EQ(r1.rows.size(), r2.rows.size());
  for (std::size_t i = 0; i < r1.rows.size(); ++i) {
    EXPECT_EQ(r1.rows[i].loss, r2.rows[i].loss);
    EXPECT_EQ(r1.rows[i].fix_iterations, r2.rows[i].fix_iterations);
  }
  EXPECT_EQ(m1.blocks[1].params.leaves(), m2.blocks[1].params.leaves());
}

// Visit-log diff: with and without hop budget, the walks agree up to the first
// visit that exits unconverged with a hop target available.
TEST(Train, HopBudgetChangesOnlyUnconvergedBatches) {
  twnn::Rng rng(14);
  twnn::ResidualStack base;
  for (int i = 0; i < 3; ++i) {
    twnn::EquilibriumBlock b;
    b.params = twnn::MlpParams::contractive_init(3, 5, 3, rng, 0.5);
    b.fix.max_iter = i == 1 ? 1 : 200;
    base.blocks.push_back(b);
  }
  twnn::Dataset data{rng.uniform_tensor({12, 3}, -1, 1), rng.uniform_tensor({12, 3}, -1, 1)};
  auto c = scalar_config();
  c.tolerance = 1e-6;
  c.epochs = 1;
  c.batch_size = 12;
  c.loss_threshold = 1e-9;
  c.learning_rate = 0.0;
  auto m0 = base, m2 = base;
  c.backward_hop_budget = 0;
  const auto r0 = twnn::train(m0, data, c);
  c.backward_hop_budget = 2;
  const auto r2 = twnn::train(m2, data, c);

  ASSERT_EQ(r0.rows.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(r0.rows[i].block, i);
  EXPECT_EQ(r0.backward_hops(), 0u);
  // Blocks 0 and 1 agree; block 1 hits max_iter, so the budgeted run hops to 0.
  ASSERT_GE(r2.rows.size(), 3u);
  EXPECT_EQ(r2.rows[0].loss, r0.rows[0].loss);
  EXPECT_EQ(r2.rows[1].loss, r0.rows[1].loss);
  EXPECT_EQ(r2.rows[1].fix_iterations, 1);
  EXPECT_EQ(r2.rows[2].block, 0u);
  EXPECT_TRUE(r2.rows[2].wormhole);
  EXPECT_EQ(r2.rows[3].block, 2u);
  EXPECT_EQ(r2.backward_hops(), 1u);
}

TEST(Train, Errors) {
  auto model = scalar_stack();
  twnn::Dataset empty{Tensor::zeros({0, 1}), Tensor::zeros({0, 1})};
  EXPECT_EQ(kind_of([&] { twnn::train(model, empty, scalar_config()); }), ErrorKind::DataExhausted);
  auto c = scalar_config();
  c.batch_size = 0;
  EXPECT_EQ(kind_of([&] { twnn::train(model, linear_data(4, 1), c); }), ErrorKind::InvalidArgument);
  twnn::Dataset ragged{Tensor::zeros({4, 1}), Tensor::zeros({3, 1})};
  EXPECT_EQ(kind_of([&] { twnn::train(model, ragged, scalar_config()); }), ErrorKind::CountMismatch);
}

TEST(Train, DivergencePropagates) {
  twnn::ResidualStack model;
  twnn::EquilibriumBlock b;
  b.activation = twnn::Activation::Identity;
  b.params = twnn::MlpParams{Tensor::matrix({{2.0}}), Tensor::vector({0}), Tensor::matrix({{2.0}}),
                             Tensor::vector({0})};
  b.fix.max_iter = 1000;
  model.blocks.push_back(b);
  EXPECT_EQ(kind_of([&] { twnn::train(model, linear_data(4, 1), scalar_config()); }), ErrorKind::Diverged);
}

TEST(TrainRecord, MetricsCsv) {
  twnn::TrainRecord r;
  r.rows.push_back(twnn::TrainRow{0, 1, 2, 3, 4, 0.5, 1.25, false, false});
  std::ostringstream out;
  r.write_metrics_csv(out);
  EXPECT_EQ(out.str(), "epoch,batch,block,fix_iters,adjoint_iters,loss,ms\n0,1,2,3,4,0.5,1.25\n");
  EXPECT_EQ(r.epoch_mean_loss(), std::vector<double>{0.5});
}

}  // namespace
