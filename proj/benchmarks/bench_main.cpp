#include <benchmark/benchmark.h>

#include "twnn/fixpoint.hpp"
#include "twnn/models.hpp"
#include "twnn/oracles.hpp"
#include "twnn/rng.hpp"

namespace {

using twnn::LeafSet;
using twnn::Tensor;

struct Problem {
  twnn::ResidualMap map{twnn::Activation::Tanh};
  LeafSet inputs;
  Tensor x;
  twnn::FixConfig fix;
};

Problem make_problem(std::size_t width, std::size_t batch) {
  twnn::Rng rng(width * 31 + batch);
  Problem p;
  p.inputs = twnn::MlpParams::contractive_init(width, width, width, rng, 0.5).leaves();
  p.x = rng.uniform_tensor({width, batch}, -1, 1);
  p.inputs.set(twnn::leaf::kInput, p.x);
  p.fix.tolerance = 1e-6;
  p.fix.max_iter = 500;
  return p;
}

void BM_MatMul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  twnn::Rng rng(1);
  const Tensor a = rng.uniform_tensor({n, n}, -1, 1), b = rng.uniform_tensor({n, 64}, -1, 1);
  for (auto _ : state) benchmark::DoNotOptimize(twnn::matmul(a, b));
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(n * n * 64));
}
BENCHMARK(BM_MatMul)->Arg(16)->Arg(64)->Arg(256);

void BM_FixForward(benchmark::State& state) {
  const Problem p = make_problem(static_cast<std::size_t>(state.range(0)), 64);
  int iterations = 0;
  for (auto _ : state) {
    const auto r = twnn::fix_forward(p.map, p.inputs, p.x, p.fix);
    iterations = r.iterations;
    benchmark::DoNotOptimize(r.z);
  }
  state.counters["fix_iters"] = iterations;
}
BENCHMARK(BM_FixForward)->Arg(16)->Arg(64);

void BM_FixAdjoint(benchmark::State& state) {
  const Problem p = make_problem(static_cast<std::size_t>(state.range(0)), 64);
  const auto fwd = twnn::fix_forward(p.map, p.inputs, p.x, p.fix);
  twnn::Rng rng(2);
  const Tensor z_bar = rng.uniform_tensor(fwd.z.shape(), -1, 1);
  for (auto _ : state) benchmark::DoNotOptimize(twnn::fix_adjoint(p.map, fwd.z, p.inputs, z_bar, p.fix));
}
BENCHMARK(BM_FixAdjoint)->Arg(16)->Arg(64);

// Backprop through every forward iteration, for contrast with the implicit adjoint.
void BM_UnrolledGradient(benchmark::State& state) {
  const Problem p = make_problem(static_cast<std::size_t>(state.range(0)), 64);
  twnn::Rng rng(2);
  const Tensor z_bar = rng.uniform_tensor(p.x.shape(), -1, 1);
  for (auto _ : state) {
    benchmark::DoNotOptimize(twnn::oracles::unrolled_fix_gradient(p.map, p.x, p.inputs, p.fix, z_bar));
  }
}
BENCHMARK(BM_UnrolledGradient)->Arg(16)->Arg(64);

}  // namespace

BENCHMARK_MAIN();
