#pragma once

#include <cstddef>
#include <optional>
#include <vector>

#include "twnn/autodiff.hpp"
#include "twnn/fixpoint.hpp"
#include "twnn/rng.hpp"
#include "twnn/tensor.hpp"

namespace twnn {

namespace leaf {
inline constexpr const char* kState = "z";
inline constexpr const char* kInput = "x";
inline constexpr const char* kW1 = "w1";
inline constexpr const char* kB1 = "b1";
inline constexpr const char* kW2 = "w2";
inline constexpr const char* kB2 = "b2";
inline constexpr const char* kHeadW = "head_w";
inline constexpr const char* kHeadB = "head_b";
inline constexpr const char* kTargets = "targets";
}  // namespace leaf

/// Two-layer perceptron weights: w1 [h x d], b1 [h], w2 [o x h], b2 [o].
struct MlpParams {
  Tensor w1;
  Tensor b1;
  Tensor w2;
  Tensor b2;

  std::size_t input_width() const { return w1.shape().at(1); }
  std::size_t hidden_width() const { return w1.shape().at(0); }
  std::size_t output_width() const { return w2.shape().at(0); }

  /// Throws ShapeMismatch unless the four shapes agree and d, h, o > 0.
  void validate() const;

  static MlpParams zeros(std::size_t d, std::size_t h, std::size_t o);
  /// Weights uniform in +-contraction/sqrt(fan_in); biases zero.
  static MlpParams contractive_init(std::size_t d, std::size_t h, std::size_t o, Rng& rng,
                                    double contraction = 0.9);

  LeafSet leaves() const;
  static MlpParams from_leaves(const LeafSet& leaves);
};

template <class V>
V net_expr(const V& w1, const V& b1, const V& w2, const V& b2, const V& x) {
  V hidden = tanh(bias_add(matmul(w1, x), b1));
  return sigmoid(bias_add(matmul(w2, hidden), b2));
}

/// sigmoid(w2 tanh(w1 x + b1) + b2). `x` is [d x batch]; one column per sample.
Tensor net(const MlpParams& params, const Tensor& x);

enum class Activation { Identity, Tanh };

template <class V>
V residual_fn_expr(Activation act, const V& w1, const V& b1, const V& w2, const V& b2, const V& z) {
  V pre = bias_add(matmul(w1, z), b1);
  V hidden = act == Activation::Tanh ? tanh(pre) : pre;
  return bias_add(matmul(w2, hidden), b2);
}

/// g(z; x, W) = x + w2 act(w1 z + b1) + b2. A single application at z = x is
/// one residual step x + F(x, W); its fixed point is the equilibrium block output.
class ResidualMap : public GenericMap<ResidualMap> {
 public:
  explicit ResidualMap(Activation act) : act_(act) {}

  std::vector<std::string> leaf_names() const override;

  template <class V>
  V apply(std::span<const V> l) const {
    return add(l[1], residual_fn_expr(act_, l[2], l[3], l[4], l[5], l[0]));
  }

 private:
  Activation act_;
};

/// g(z; x, alpha) = net(alpha, x + z). State and input share the net's input
/// width, so d == o.
class NetMap : public GenericMap<NetMap> {
 public:
  std::vector<std::string> leaf_names() const override;

  template <class V>
  V apply(std::span<const V> l) const {
    return net_expr(l[2], l[3], l[4], l[5], add(l[1], l[0]));
  }
};

/// g(z; x) = a z + x with a fixed scalar a. Leaves: z, x.
class LinearMap : public GenericMap<LinearMap> {
 public:
  explicit LinearMap(double a) : a_(a) {}

  std::vector<std::string> leaf_names() const override;
  double coefficient() const noexcept { return a_; }

  template <class V>
  V apply(std::span<const V> l) const {
    return add(scale(l[0], a_), l[1]);
  }

 private:
  double a_;
};

enum class BlockKind { Residual, Net };

struct EquilibriumBlock {
  BlockKind kind = BlockKind::Residual;
  Activation activation = Activation::Tanh;
  MlpParams params;
  FixConfig fix;

  std::size_t width() const { return params.input_width(); }
  void validate() const;

  const DifferentiableMap& map() const;
  /// Leaves of map() other than the state: the injected input and the weights.
  LeafSet inputs(const Tensor& x) const;
  /// Residual blocks start at their input (first iterate is one residual
  /// step); net blocks start at zero activity.
  Tensor initial_state(const Tensor& x) const;
};

/// x + F(x, W): one explicit residual term, no fixed-point solve.
Tensor residual_step(const EquilibriumBlock& block, const Tensor& x);

struct Readout {
  Tensor weight;  // [classes x width]
  Tensor bias;    // [classes]
};

/// Loss map for a block output: mean((sigmoid(W z + b) - targets)^2).
/// Leaves: z, head_w, head_b, targets.
class ReadoutLossMap : public GenericMap<ReadoutLossMap> {
 public:
  std::vector<std::string> leaf_names() const override;

  template <class V>
  V apply(std::span<const V> l) const {
    V pred = sigmoid(bias_add(matmul(l[1], l[0]), l[2]));
    return mean(square(sub(pred, l[3])));
  }
};

/// mean((z - targets)^2). Leaves: z, targets.
class MseMap : public GenericMap<MseMap> {
 public:
  std::vector<std::string> leaf_names() const override;

  template <class V>
  V apply(std::span<const V> l) const {
    return mean(square(sub(l[0], l[1])));
  }
};

/// Ordered equilibrium blocks with an optional fixed input projection and an
/// optional trained readout head.
struct ResidualStack {
  std::vector<EquilibriumBlock> blocks;
  std::optional<Tensor> input_projection;  // [width x raw_features], not trained
  std::optional<Readout> readout;

  std::size_t depth() const noexcept { return blocks.size(); }
  void validate() const;

  /// Raw [features x batch] columns to the first block's input.
  Tensor embed(const Tensor& raw) const;
  /// Readout of a block output (identity when there is no head).
  Tensor predict_from_state(const Tensor& z) const;
  /// Plain pass 0..D-1 with every wormhole closed; returns predictions.
  Tensor forward(const Tensor& raw) const;
};

}  // namespace twnn
