#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "twnn/autodiff.hpp"
#include "twnn/fixpoint.hpp"
#include "twnn/tensor.hpp"

// Brute-force references for verifying the implicit transforms. Nothing here
// calls into the fixed-point solver: re-solves and unrolled loops are written
// out directly. (FixConfig is used only as a parameter bundle.)
namespace twnn::oracles {

struct OracleReport {
  std::string name;
  double max_abs_error = 0.0;
  double max_rel_error = 0.0;
  std::size_t cases_run = 0;
  double tolerance = 0.0;
  bool pass = false;
};

/// Per leaf, |actual - expected|_inf / max(|expected|_inf, floor); the report
/// keeps the worst leaf. pass == (max_rel_error <= tolerance).
OracleReport compare_bundles(std::string name, const CotangentBundle& expected, const CotangentBundle& actual,
                             double tolerance, double floor = 1e-12);

/// Folds another report into `into` (maxima of errors, sum of cases).
void merge(OracleReport& into, const OracleReport& other);

using ScalarFn = std::function<double(const LeafSet&)>;

/// Central differences (f(theta + h e_i) - f(theta - h e_i)) / 2h for every
/// coordinate of every leaf.
CotangentBundle fd_gradient(const ScalarFn& f, const LeafSet& leaves, double h = 1e-5);

/// Plain undamped-or-damped iteration of g (first leaf is the state) to an
/// L-inf step of `tolerance`. Throws Diverged when max_iter is exhausted.
Tensor solve_fixed_point(const DifferentiableMap& g, const LeafSet& inputs, Tensor x0, double tolerance,
                         int max_iter, double damping = 1.0);

/// Records every forward iteration on one tape and backpropagates `z_bar`
/// through the whole sequence. x0 is treated as a constant.
CotangentBundle unrolled_fix_gradient(const DifferentiableMap& g, Tensor x0, const LeafSet& inputs,
                                      const FixConfig& config, const Tensor& z_bar);

/// Power iteration on J^T J with J = dg/dz at z; returns the estimate of the
/// largest singular value of J.
double jacobian_norm_estimate(const DifferentiableMap& g, const Tensor& z, const LeafSet& inputs, int iters = 50,
                              std::uint64_t seed = 0x5eed);

}  // namespace twnn::oracles
