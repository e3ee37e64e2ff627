#include "twnn/oracles.hpp"

#include <algorithm>
#include <cmath>

#include "twnn/error.hpp"
#include "twnn/rng.hpp"

namespace twnn::oracles {

OracleReport compare_bundles(std::string name, const CotangentBundle& expected, const CotangentBundle& actual,
                             double tolerance, double floor) {
  OracleReport r;
  r.name = std::move(name);
  r.tolerance = tolerance;
  for (std::size_t i = 0; i < expected.size(); ++i) {
    const Tensor& e = expected.value(i);
    const Tensor& a = actual.at(expected.name(i));
    const double abs_err = norm_inf_diff(a, e);
    r.max_abs_error = std::max(r.max_abs_error, abs_err);
    r.max_rel_error = std::max(r.max_rel_error, abs_err / std::max(norm_inf(e), floor));
    r.cases_run += e.size();
  }
  r.pass = r.max_rel_error <= tolerance;
  return r;
}

void merge(OracleReport& into, const OracleReport& other) {
  into.max_abs_error = std::max(into.max_abs_error, other.max_abs_error);
  into.max_rel_error = std::max(into.max_rel_error, other.max_rel_error);
  into.cases_run += other.cases_run;
  into.pass = into.max_rel_error <= into.tolerance;
}

CotangentBundle fd_gradient(const ScalarFn& f, const LeafSet& leaves, double h) {
  if (!(h > 0.0)) throw Error(ErrorKind::InvalidArgument, "finite-difference step must be positive");
  CotangentBundle out;
  LeafSet probe = leaves;
  for (std::size_t li = 0; li < leaves.size(); ++li) {
    const std::string& name = leaves.name(li);
    Tensor g = Tensor::zeros(leaves.value(li).shape());
    for (std::size_t k = 0; k < g.size(); ++k) {
      Tensor& theta = probe.at(name);
      const double original = theta[k];
      theta[k] = original + h;
      const double up = f(probe);
      probe.at(name)[k] = original - h;
      const double down = f(probe);
      probe.at(name)[k] = original;
      g[k] = (up - down) / (2.0 * h);
    }
    out.set(name, std::move(g));
  }
  return out;
}

Tensor solve_fixed_point(const DifferentiableMap& g, const LeafSet& inputs, Tensor x0, double tolerance,
                         int max_iter, double damping) {
  const auto names = g.leaf_names();
  std::vector<Tensor> values;
  values.push_back(x0);
  for (std::size_t i = 1; i < names.size(); ++i) values.push_back(inputs.at(names[i]));
  Tensor x = std::move(x0);
  for (int t = 0; t < max_iter; ++t) {
    values[0] = x;
    Tensor next = g.evaluate(std::span<const Tensor>(values));
    for (std::size_t i = 0; i < next.size(); ++i) next[i] = (1.0 - damping) * x[i] + damping * next[i];
    double step = 0.0;
    for (std::size_t i = 0; i < next.size(); ++i) step = std::max(step, std::abs(next[i] - x[i]));
    x = std::move(next);
    if (step <= tolerance) return x;
  }
  throw Error(ErrorKind::Diverged, "oracle re-solve did not reach tolerance");
}

CotangentBundle unrolled_fix_gradient(const DifferentiableMap& g, Tensor x0, const LeafSet& inputs,
                                      const FixConfig& config, const Tensor& z_bar) {
  const auto names = g.leaf_names();
  Tape tape;
  std::vector<Var> vars(names.size());
  for (std::size_t i = 1; i < names.size(); ++i) vars[i] = tape.leaf(names[i], inputs.at(names[i]));
  Var state = tape.constant(std::move(x0));
  bool settled = false;
  for (int t = 0; t < config.max_iter && !settled; ++t) {
    vars[0] = state;
    Var next = g.evaluate(std::span<const Var>(vars));
    if (config.damping != 1.0) next = add(scale(state, 1.0 - config.damping), scale(next, config.damping));
    settled = norm_inf_diff(next.value(), state.value()) <= config.tolerance;
    state = next;
  }
  tape.seal();
  return tape.pullback(state, z_bar);
}

double jacobian_norm_estimate(const DifferentiableMap& g, const Tensor& z, const LeafSet& inputs, int iters,
                              std::uint64_t seed) {
  const auto names = g.leaf_names();
  LeafSet primals;
  primals.set(names.front(), z);
  for (std::size_t i = 1; i < names.size(); ++i) primals.set(names[i], inputs.at(names[i]));
  const Pullback pb = vjp(g, primals).pullback;

  Rng rng(seed);
  Tensor v = rng.uniform_tensor(z.shape(), -1.0, 1.0);
  double sigma = 0.0;
  for (int k = 0; k < std::max(iters, 10); ++k) {
    const double nv = norm_l2(v);
    if (nv == 0.0) return 0.0;
    v = scale(v, 1.0 / nv);
    const Tensor jv = jvp(g, primals, LeafSet{{names.front(), v}}).tangent;
    sigma = norm_l2(jv);
    v = pb(jv).at(names.front());
  }
  return sigma;
}

}  // namespace twnn::oracles
