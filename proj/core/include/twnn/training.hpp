#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <vector>

#include "twnn/autodiff.hpp"
#include "twnn/fixpoint.hpp"
#include "twnn/models.hpp"
#include "twnn/wormhole.hpp"

namespace twnn {

struct TrainConfig {
  double learning_rate = 0.001;
  /// Fixed-point solver tolerance.
  double tolerance = 0.001;
  /// Block-loss threshold used by the wormhole controller.
  double loss_threshold = 0.01;
  std::size_t batch_size = 64;
  int max_iter = 300;
  int epochs = 1;
  std::uint64_t seed = 0;
  int backward_hop_budget = 2;

  /// Throws InvalidArgument naming the offending field.
  void validate() const;
};

/// Samples stored one per row: inputs [N x features], targets [N x outputs].
struct Dataset {
  Tensor inputs;
  Tensor targets;

  std::size_t size() const { return inputs.rank() == 2 ? inputs.rows() : 0; }
  void validate() const;
  /// Selected samples as columns: [features x indices.size()].
  Tensor input_columns(std::span<const std::size_t> indices) const;
  Tensor target_columns(std::span<const std::size_t> indices) const;
};

struct TrainRow {
  int epoch = 0;
  std::size_t batch = 0;
  std::size_t block = 0;
  int fix_iterations = 0;
  int adjoint_iterations = 0;
  double loss = 0.0;
  double wall_clock_ms = 0.0;
  bool approximate_gradient = false;
  bool wormhole = false;
};

struct TrainRecord {
  std::vector<TrainRow> rows;
  /// Block visits made for each batch, in batch order.
  std::vector<std::size_t> visits_per_batch;
  std::optional<WormholePlan> last_plan;
  std::optional<std::filesystem::path> checkpoint;

  std::size_t approximate_gradient_count() const;
  std::size_t backward_hops() const;
  /// Mean row loss per epoch.
  std::vector<double> epoch_mean_loss() const;
  /// Header `epoch,batch,block,fix_iters,adjoint_iters,loss,ms`, one row per visit.
  void write_metrics_csv(std::ostream& out) const;
};

/// mean((targets - predictions)^2)
double mse_loss(const Tensor& predictions, const Tensor& targets);

struct LossGradient {
  double loss = 0.0;
  /// Cotangents of every non-state leaf of the map.
  CotangentBundle gradients;
  FixResult forward;
  AdjointFixResult adjoint;
};

/// Solves z* = g(z*; inputs), scores mse(z*, targets), and differentiates the
/// loss through the implicit pullback of the solve.
LossGradient loss_through_fix(const DifferentiableMap& g, const LeafSet& inputs, const Tensor& targets,
                              Tensor x0, const FixConfig& config);

/// theta - learning_rate * grad for every tensor in `params`. Extra entries in
/// `grads` are ignored; a parameter without a gradient is MissingGradient.
LeafSet sgd_step(const LeafSet& params, const CotangentBundle& grads, double learning_rate);

/// Batched block-wise training under the wormhole controller. Each visit
/// solves the block's fixed point, scores the readout, and updates only the
/// visited block (plus the readout head). Mutates `model`.
TrainRecord train(ResidualStack& model, const Dataset& dataset, const TrainConfig& config);

/// Mean squared error of model.forward over the whole dataset.
double evaluate_mse(const ResidualStack& model, const Dataset& dataset, std::size_t batch_size = 256);

}  // namespace twnn
