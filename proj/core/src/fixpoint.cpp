#include "twnn/fixpoint.hpp"

#include <cmath>
#include <optional>

#include "twnn/error.hpp"

namespace twnn {

void FixConfig::validate() const {
  if (!(tolerance > 0.0) || !std::isfinite(tolerance)) {
    throw Error(ErrorKind::InvalidArgument, "tolerance must be positive");
  }
  if (max_iter < 1) throw Error(ErrorKind::InvalidArgument, "max_iter must be >= 1");
  if (!(damping > 0.0 && damping <= 1.0)) throw Error(ErrorKind::InvalidArgument, "damping must lie in (0, 1]");
  if (divergence_patience < 1) throw Error(ErrorKind::InvalidArgument, "divergence_patience must be >= 1");
}

namespace {

class DivergenceMonitor {
 public:
  explicit DivergenceMonitor(int patience) : patience_(patience) {}

  void observe(double residual, const char* what) {
    if (!std::isfinite(residual)) throw Error(ErrorKind::Diverged, std::string(what) + ": non-finite residual");
    streak_ = (previous_ && residual > *previous_) ? streak_ + 1 : 0;
    previous_ = residual;
    if (streak_ >= patience_ && residual > kDivergenceResidual) {
      throw Error(ErrorKind::Diverged, std::string(what) + ": residual grew for " + std::to_string(streak_) +
                                           " steps to " + std::to_string(residual));
    }
  }

 private:
  int patience_;
  int streak_ = 0;
  std::optional<double> previous_;
};

// x <- (1 - damping) x + damping y
Tensor damp(const Tensor& x, Tensor y, double damping) {
  if (damping == 1.0) return y;
  auto yd = y.data();
  auto xd = x.data();
  for (std::size_t i = 0; i < yd.size(); ++i) yd[i] = (1.0 - damping) * xd[i] + damping * yd[i];
  return y;
}

// Shared loop of the forward, tangent and adjoint solves.
template <class Step>
FixResult iterate(Step&& step, Tensor x, const FixConfig& config, const char* what) {
  config.validate();
  DivergenceMonitor monitor(config.divergence_patience);
  FixResult result;
  for (int t = 1; t <= config.max_iter; ++t) {
    Tensor next = step(x);
    if (!next.same_shape(x)) {
      throw Error(ErrorKind::ShapeMismatch, std::string(what) + ": map changed state shape from " +
                                                shape_string(x.shape()) + " to " + shape_string(next.shape()));
    }
    next = damp(x, std::move(next), config.damping);
    const double residual = norm_inf_diff(next, x);
    x = std::move(next);
    result.iterations = t;
    result.final_residual = residual;
    result.residual_history.push_back(residual);
    monitor.observe(residual, what);
    if (residual <= config.tolerance) {
      result.converged = true;
      break;
    }
  }
  result.z = std::move(x);
  return result;
}

std::vector<Tensor> leaves_with_state(const std::vector<std::string>& names, const Tensor& state,
                                      const LeafSet& inputs) {
  if (names.empty()) throw Error(ErrorKind::InvalidArgument, "map has no state leaf");
  std::vector<Tensor> values;
  values.reserve(names.size());
  values.push_back(state);
  for (std::size_t i = 1; i < names.size(); ++i) values.push_back(inputs.at(names[i]));
  return values;
}

LeafSet with_state(const std::vector<std::string>& names, const Tensor& state, const LeafSet& inputs) {
  LeafSet leaves;
  leaves.set(names.front(), state);
  for (std::size_t i = 1; i < names.size(); ++i) leaves.set(names[i], inputs.at(names[i]));
  return leaves;
}

}  // namespace

FixResult fix_forward(const StateMap& g, Tensor x0, const FixConfig& config) {
  return iterate(g, std::move(x0), config, "fix_forward");
}

FixResult fix_forward(const DifferentiableMap& g, const LeafSet& inputs, Tensor x0, const FixConfig& config) {
  const auto names = g.leaf_names();
  std::vector<Tensor> values = leaves_with_state(names, x0, inputs);
  auto step = [&](const Tensor& state) {
    values[0] = state;
    return g.evaluate(std::span<const Tensor>(values));
  };
  return iterate(step, std::move(x0), config, "fix_forward");
}

TangentFixResult fix_tangent(const DifferentiableMap& g, const Tensor& z, const LeafSet& inputs,
                             const LeafSet& input_tangents, const FixConfig& config, bool forward_converged) {
  const auto names = g.leaf_names();
  const LeafSet primals = with_state(names, z, inputs);
  LeafSet tangents = input_tangents;
  auto step = [&](const Tensor& u) {
    tangents.set(names.front(), u);
    return jvp(g, primals, tangents).tangent;
  };
  FixResult r = iterate(step, Tensor::zeros(z.shape()), config, "fix_tangent");
  return TangentFixResult{std::move(r.z), r.iterations, r.converged, !r.converged || !forward_converged};
}

FixPullback::FixPullback(Pullback g_pullback, std::string state_leaf, FixConfig config, bool forward_converged)
    : g_pullback_(std::move(g_pullback)),
      state_leaf_(std::move(state_leaf)),
      config_(config),
      forward_converged_(forward_converged) {}

AdjointFixResult FixPullback::operator()(const Tensor& z_cotangent) const {
  if (!z_cotangent.same_shape(g_pullback_.output())) {
    throw Error(ErrorKind::ShapeMismatch, "fix_adjoint: cotangent " + shape_string(z_cotangent.shape()) +
                                              " for state " + shape_string(g_pullback_.output().shape()));
  }
  auto step = [&](const Tensor& u) { return g_pullback_(add(u, z_cotangent)).at(state_leaf_); };
  FixResult r = iterate(step, Tensor::zeros(z_cotangent.shape()), config_, "fix_adjoint");

  CotangentBundle all = g_pullback_(add(r.z, z_cotangent));
  AdjointFixResult out;
  for (std::size_t i = 0; i < all.size(); ++i) {
    if (all.name(i) != state_leaf_) out.leaf_cotangents.set(all.name(i), all.value(i));
  }
  out.adjoint_state = std::move(r.z);
  out.adjoint_iterations = r.iterations;
  out.final_residual = r.final_residual;
  out.adjoint_converged = r.converged;
  out.approximate_gradient = !r.converged || !forward_converged_;
  return out;
}

namespace {

FixPullback make_pullback(const DifferentiableMap& g, const Tensor& z, const LeafSet& inputs,
                          const FixConfig& config, bool forward_converged) {
  const auto names = g.leaf_names();
  VjpResult r = vjp(g, with_state(names, z, inputs));
  if (!r.output.same_shape(z)) {
    throw Error(ErrorKind::ShapeMismatch, "map output " + shape_string(r.output.shape()) + " for state " +
                                              shape_string(z.shape()));
  }
  return FixPullback(std::move(r.pullback), names.front(), config, forward_converged);
}

}  // namespace

AdjointFixResult fix_adjoint(const DifferentiableMap& g, const Tensor& z, const LeafSet& inputs,
                             const Tensor& z_cotangent, const FixConfig& config, bool forward_converged) {
  config.validate();
  return make_pullback(g, z, inputs, config, forward_converged)(z_cotangent);
}

FixBlock fix_block(const DifferentiableMap& g, const LeafSet& inputs, Tensor x0, const FixConfig& config) {
  FixResult forward = fix_forward(g, inputs, std::move(x0), config);
  FixPullback pullback = make_pullback(g, forward.z, inputs, config, forward.converged);
  return FixBlock{std::move(forward), std::move(pullback)};
}

}  // namespace twnn
