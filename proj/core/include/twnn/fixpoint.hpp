#pragma once

#include <functional>
#include <string>
#include <vector>

#include "twnn/autodiff.hpp"
#include "twnn/tensor.hpp"

namespace twnn {

struct FixConfig {
  double tolerance = 1e-3;
  int max_iter = 300;
  /// x_t = (1 - damping) x_{t-1} + damping g(x_{t-1}); 1.0 is plain iteration.
  double damping = 1.0;
  int divergence_patience = 10;

  /// Throws InvalidArgument naming the offending field.
  void validate() const;
};

/// A residual above this that keeps growing for `divergence_patience` steps is divergence.
inline constexpr double kDivergenceResidual = 1e6;

struct FixResult {
  Tensor z;
  int iterations = 0;
  double final_residual = 0.0;
  bool converged = false;
  std::vector<double> residual_history;
};

struct TangentFixResult {
  Tensor tangent;
  int iterations = 0;
  bool converged = false;
  /// Set when either the tangent loop or the forward solve it linearizes did not converge.
  bool approximate = false;
};

struct AdjointFixResult {
  /// Cotangents of every non-state leaf (weights and injected input).
  CotangentBundle leaf_cotangents;
  /// Converged adjoint state u* = J_z^T (u* + z_bar).
  Tensor adjoint_state;
  int adjoint_iterations = 0;
  double final_residual = 0.0;
  bool adjoint_converged = false;
  /// Set when the adjoint loop or the forward solve hit max_iter unconverged.
  bool approximate_gradient = false;
};

using StateMap = std::function<Tensor(const Tensor& state)>;

/// Damped iteration of `g` from `x0` until the L-inf step is <= tolerance or
/// max_iter is reached. Throws Diverged or ShapeMismatch.
FixResult fix_forward(const StateMap& g, Tensor x0, const FixConfig& config);

// In the overloads below, the first leaf of `g` is the state; `inputs` must
// supply every other leaf. The state leaf is never read from `inputs`.

FixResult fix_forward(const DifferentiableMap& g, const LeafSet& inputs, Tensor x0, const FixConfig& config);

/// Solves u = J_z u + J_inputs v at the fixed point `z`, i.e. dz*/d(inputs) . v.
TangentFixResult fix_tangent(const DifferentiableMap& g, const Tensor& z, const LeafSet& inputs,
                             const LeafSet& input_tangents, const FixConfig& config,
                             bool forward_converged = true);

/// Records g once at (z, inputs), iterates u <- J_z^T (u + z_bar) from u = 0,
/// then returns J_inputs^T (u* + z_bar).
AdjointFixResult fix_adjoint(const DifferentiableMap& g, const Tensor& z, const LeafSet& inputs,
                             const Tensor& z_cotangent, const FixConfig& config, bool forward_converged = true);

/// Reverse transform of one solved fixed point. Owns the tape of g at (z, inputs),
/// so the map object need not outlive it. Reentrant.
class FixPullback {
 public:
  FixPullback(Pullback g_pullback, std::string state_leaf, FixConfig config, bool forward_converged);

  AdjointFixResult operator()(const Tensor& z_cotangent) const;

 private:
  Pullback g_pullback_;
  std::string state_leaf_;
  FixConfig config_;
  bool forward_converged_;
};

struct FixBlock {
  FixResult forward;
  FixPullback pullback;
};

/// Forward solve paired with its implicit pullback.
FixBlock fix_block(const DifferentiableMap& g, const LeafSet& inputs, Tensor x0, const FixConfig& config);

}  // namespace twnn
