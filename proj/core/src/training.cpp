#include "twnn/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <ostream>

#include "twnn/error.hpp"
#include "twnn/rng.hpp"

namespace twnn {

void TrainConfig::validate() const {
  auto fail = [](const char* msg) { throw Error(ErrorKind::InvalidArgument, msg); };
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) fail("learning_rate must be >= 0");
  if (!(tolerance > 0.0)) fail("tolerance must be positive");
  if (!(loss_threshold > 0.0)) fail("loss_threshold must be positive");
  if (batch_size == 0) fail("batch_size must be positive");
  if (max_iter < 1) fail("max_iter must be >= 1");
  if (epochs < 0) fail("epochs must be >= 0");
  if (backward_hop_budget < 0) fail("backward_hop_budget must be >= 0");
}

void Dataset::validate() const {
  if (inputs.rank() != 2 || targets.rank() != 2) {
    throw Error(ErrorKind::ShapeMismatch, "dataset inputs and targets must be [N x features] matrices");
  }
  if (inputs.rows() != targets.rows()) {
    throw Error(ErrorKind::CountMismatch, std::to_string(inputs.rows()) + " inputs but " +
                                              std::to_string(targets.rows()) + " targets");
  }
}

namespace {

Tensor gather_columns(const Tensor& rows, std::span<const std::size_t> indices) {
  const std::size_t f = rows.cols();
  Tensor out = Tensor::zeros({f, indices.size()});
  for (std::size_t j = 0; j < indices.size(); ++j) {
    const std::size_t r = indices[j];
    if (r >= rows.rows()) throw Error(ErrorKind::InvalidArgument, "sample index out of range");
    for (std::size_t i = 0; i < f; ++i) out.at(i, j) = rows.at(r, i);
  }
  return out;
}

}  // namespace

Tensor Dataset::input_columns(std::span<const std::size_t> indices) const { return gather_columns(inputs, indices); }
Tensor Dataset::target_columns(std::span<const std::size_t> indices) const {
  return gather_columns(targets, indices);
}

std::size_t TrainRecord::approximate_gradient_count() const {
  return static_cast<std::size_t>(
      std::count_if(rows.begin(), rows.end(), [](const TrainRow& r) { return r.approximate_gradient; }));
}

std::size_t TrainRecord::backward_hops() const {
  return static_cast<std::size_t>(std::count_if(rows.begin(), rows.end(), [](const TrainRow& r) { return r.wormhole; }));
}

std::vector<double> TrainRecord::epoch_mean_loss() const {
  std::vector<double> sums;
  std::vector<std::size_t> counts;
  for (const auto& r : rows) {
    const auto e = static_cast<std::size_t>(r.epoch);
    if (e >= sums.size()) {
      sums.resize(e + 1, 0.0);
      counts.resize(e + 1, 0);
    }
    sums[e] += r.loss;
    ++counts[e];
  }
  for (std::size_t e = 0; e < sums.size(); ++e) {
    if (counts[e]) sums[e] /= static_cast<double>(counts[e]);
  }
  return sums;
}

void TrainRecord::write_metrics_csv(std::ostream& out) const {
  out << "epoch,batch,block,fix_iters,adjoint_iters,loss,ms\n";
  out << std::setprecision(17);
  for (const auto& r : rows) {
    out << r.epoch << ',' << r.batch << ',' << r.block << ',' << r.fix_iterations << ',' << r.adjoint_iterations
        << ',' << r.loss << ',' << std::setprecision(6) << r.wall_clock_ms << std::setprecision(17) << '\n';
  }
}

double mse_loss(const Tensor& predictions, const Tensor& targets) {
  if (!predictions.same_shape(targets)) {
    throw Error(ErrorKind::ShapeMismatch, "mse_loss: " + shape_string(predictions.shape()) + " vs " +
                                              shape_string(targets.shape()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    const double d = targets[i] - predictions[i];
    s += d * d;
  }
  return s / static_cast<double>(predictions.size());
}

LossGradient loss_through_fix(const DifferentiableMap& g, const LeafSet& inputs, const Tensor& targets,
                              Tensor x0, const FixConfig& config) {
  FixBlock block = fix_block(g, inputs, std::move(x0), config);
  static const MseMap kMse;
  const CotangentBundle loss_grad = grad(kMse, LeafSet{{leaf::kState, block.forward.z}, {leaf::kTargets, targets}});
  LossGradient out;
  out.loss = mse_loss(block.forward.z, targets);
  out.adjoint = block.pullback(loss_grad.at(leaf::kState));
  out.gradients = out.adjoint.leaf_cotangents;
  out.forward = std::move(block.forward);
  return out;
}

LeafSet sgd_step(const LeafSet& params, const CotangentBundle& grads, double learning_rate) {
  LeafSet out;
  for (std::size_t i = 0; i < params.size(); ++i) {
    const std::string& name = params.name(i);
    if (!grads.contains(name)) throw Error(ErrorKind::MissingGradient, "no gradient for '" + name + "'");
    const Tensor& g = grads.at(name);
    if (!g.same_shape(params.value(i))) {
      throw Error(ErrorKind::ShapeMismatch, "gradient for '" + name + "' has shape " + shape_string(g.shape()));
    }
    Tensor theta = params.value(i);
    for (std::size_t k = 0; k < theta.size(); ++k) theta[k] -= learning_rate * g[k];
    out.set(name, std::move(theta));
  }
  return out;
}

namespace {

struct VisitOutcome {
  FixResult forward;
  double loss = 0.0;
  int adjoint_iterations = 0;
  bool approximate = false;
};

VisitOutcome visit_block(ResidualStack& model, std::size_t index, const Tensor& x, const Tensor& targets,
                         const TrainConfig& config) {
  EquilibriumBlock& block = model.blocks[index];
  FixConfig fix = block.fix;
  fix.max_iter = std::min(fix.max_iter, config.max_iter);

  FixBlock solved = fix_block(block.map(), block.inputs(x), block.initial_state(x), fix);
  const Tensor& z = solved.forward.z;

  CotangentBundle head_grads;
  Tensor z_bar;
  if (model.readout) {
    static const ReadoutLossMap kLoss;
    head_grads = grad(kLoss, LeafSet{{leaf::kState, z},
                                     {leaf::kHeadW, model.readout->weight},
                                     {leaf::kHeadB, model.readout->bias},
                                     {leaf::kTargets, targets}});
    z_bar = head_grads.at(leaf::kState);
  } else {
    static const MseMap kLoss;
    z_bar = grad(kLoss, LeafSet{{leaf::kState, z}, {leaf::kTargets, targets}}).at(leaf::kState);
  }
  const double loss = mse_loss(model.predict_from_state(z), targets);

  AdjointFixResult adjoint = solved.pullback(z_bar);
  block.params = MlpParams::from_leaves(sgd_step(block.params.leaves(), adjoint.leaf_cotangents, config.learning_rate));
  if (model.readout) {
    LeafSet head{{leaf::kHeadW, model.readout->weight}, {leaf::kHeadB, model.readout->bias}};
    head = sgd_step(head, head_grads, config.learning_rate);
    model.readout->weight = head.at(leaf::kHeadW);
    model.readout->bias = head.at(leaf::kHeadB);
  }
  return VisitOutcome{std::move(solved.forward), loss, adjoint.adjoint_iterations, adjoint.approximate_gradient};
}

}  // namespace

TrainRecord train(ResidualStack& model, const Dataset& dataset, const TrainConfig& config) {
  config.validate();
  model.validate();
  dataset.validate();
  if (dataset.size() == 0) throw Error(ErrorKind::DataExhausted, "dataset yields no batch");

  using clock = std::chrono::steady_clock;
  TrainRecord record;
  Rng rng(config.seed);
  const std::size_t n = dataset.size();
  const std::size_t batches = (n + config.batch_size - 1) / config.batch_size;

  for (int epoch = 0; epoch < config.epochs; ++epoch) {
    Rng epoch_rng = rng.split();
    const std::vector<std::size_t> order = epoch_rng.permutation(n);
    for (std::size_t b = 0; b < batches; ++b) {
      const std::size_t begin = b * config.batch_size;
      const std::size_t end = std::min(n, begin + config.batch_size);
      const std::span<const std::size_t> idx(order.data() + begin, end - begin);
      const Tensor targets = dataset.target_columns(idx);
      Tensor x = model.embed(dataset.input_columns(idx));

      WormholePlan plan(model.depth(), config.backward_hop_budget);
      std::size_t current = 0;
      std::size_t visits = 0;
      bool wormhole = false;
      for (;;) {
        const auto t0 = clock::now();
        VisitOutcome v = visit_block(model, current, x, targets, config);
        const double ms = std::chrono::duration<double, std::milli>(clock::now() - t0).count();
        record.rows.push_back(TrainRow{epoch, b, current, v.forward.iterations, v.adjoint_iterations, v.loss, ms,
                                       v.approximate, wormhole});
        ++visits;
        const WormholeDecision next = wormhole_next(plan, current, v.loss, v.forward, config.loss_threshold);
        x = std::move(v.forward.z);
        if (next.kind == WormholeDecision::Kind::Halt) break;
        wormhole = next.kind == WormholeDecision::Kind::HopBack;
        current = next.target;
      }
      plan.mark_unvisited_skipped();
      record.visits_per_batch.push_back(visits);
      record.last_plan = std::move(plan);
    }
  }
  return record;
}

double evaluate_mse(const ResidualStack& model, const Dataset& dataset, std::size_t batch_size) {
  dataset.validate();
  double total = 0.0;
  std::size_t count = 0;
  std::vector<std::size_t> idx;
  for (std::size_t begin = 0; begin < dataset.size(); begin += batch_size) {
    idx.clear();
    for (std::size_t i = begin; i < std::min(dataset.size(), begin + batch_size); ++i) idx.push_back(i);
    const Tensor pred = model.forward(dataset.input_columns(idx));
    const Tensor targets = dataset.target_columns(idx);
    total += mse_loss(pred, targets) * static_cast<double>(pred.size());
    count += pred.size();
  }
  return count ? total / static_cast<double>(count) : 0.0;
}

}  // namespace twnn
