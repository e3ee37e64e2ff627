#include "twnn/models.hpp"

#include <cmath>

#include "twnn/error.hpp"

namespace twnn {

namespace {

void expect_shape(const char* what, const Tensor& t, const Shape& shape) {
  if (t.shape() != shape) {
    throw Error(ErrorKind::ShapeMismatch,
                std::string(what) + " has shape " + shape_string(t.shape()) + ", expected " + shape_string(shape));
  }
}

const ResidualMap kResidualTanh(Activation::Tanh);
const ResidualMap kResidualIdentity(Activation::Identity);
const NetMap kNetMap;

}  // namespace

void MlpParams::validate() const {
  if (w1.rank() != 2 || w2.rank() != 2) throw Error(ErrorKind::ShapeMismatch, "w1 and w2 must be matrices");
  const std::size_t h = w1.shape()[0], d = w1.shape()[1], o = w2.shape()[0];
  if (h == 0 || d == 0 || o == 0) throw Error(ErrorKind::ShapeMismatch, "zero-width MLP");
  expect_shape("b1", b1, {h});
  expect_shape("w2", w2, {o, h});
  expect_shape("b2", b2, {o});
}

MlpParams MlpParams::zeros(std::size_t d, std::size_t h, std::size_t o) {
  return {Tensor::zeros({h, d}), Tensor::zeros({h}), Tensor::zeros({o, h}), Tensor::zeros({o})};
}

MlpParams MlpParams::contractive_init(std::size_t d, std::size_t h, std::size_t o, Rng& rng, double contraction) {
  const double s1 = contraction / std::sqrt(static_cast<double>(d));
  const double s2 = contraction / std::sqrt(static_cast<double>(h));
  MlpParams p = zeros(d, h, o);
  p.w1 = rng.uniform_tensor({h, d}, -s1, s1);
  p.w2 = rng.uniform_tensor({o, h}, -s2, s2);
  return p;
}

LeafSet MlpParams::leaves() const {
  return LeafSet{{leaf::kW1, w1}, {leaf::kB1, b1}, {leaf::kW2, w2}, {leaf::kB2, b2}};
}

MlpParams MlpParams::from_leaves(const LeafSet& leaves) {
  MlpParams p{leaves.at(leaf::kW1), leaves.at(leaf::kB1), leaves.at(leaf::kW2), leaves.at(leaf::kB2)};
  p.validate();
  return p;
}

Tensor net(const MlpParams& params, const Tensor& x) {
  params.validate();
  return net_expr(params.w1, params.b1, params.w2, params.b2, x);
}

std::vector<std::string> ResidualMap::leaf_names() const {
  return {leaf::kState, leaf::kInput, leaf::kW1, leaf::kB1, leaf::kW2, leaf::kB2};
}

std::vector<std::string> NetMap::leaf_names() const {
  return {leaf::kState, leaf::kInput, leaf::kW1, leaf::kB1, leaf::kW2, leaf::kB2};
}

std::vector<std::string> ReadoutLossMap::leaf_names() const {
  return {leaf::kState, leaf::kHeadW, leaf::kHeadB, leaf::kTargets};
}

std::vector<std::string> MseMap::leaf_names() const { return {leaf::kState, leaf::kTargets}; }

std::vector<std::string> LinearMap::leaf_names() const { return {leaf::kState, leaf::kInput}; }

void EquilibriumBlock::validate() const {
  params.validate();
  if (params.input_width() != params.output_width()) {
    throw Error(ErrorKind::ShapeMismatch, "equilibrium block needs equal input and output widths, got " +
                                              std::to_string(params.input_width()) + " and " +
                                              std::to_string(params.output_width()));
  }
  fix.validate();
}

const DifferentiableMap& EquilibriumBlock::map() const {
  if (kind == BlockKind::Net) return kNetMap;
  return activation == Activation::Tanh ? static_cast<const DifferentiableMap&>(kResidualTanh)
                                        : static_cast<const DifferentiableMap&>(kResidualIdentity);
}

LeafSet EquilibriumBlock::inputs(const Tensor& x) const {
  LeafSet in = params.leaves();
  in.set(leaf::kInput, x);
  return in;
}

Tensor EquilibriumBlock::initial_state(const Tensor& x) const {
  return kind == BlockKind::Residual ? x : Tensor::zeros(x.shape());
}

Tensor residual_step(const EquilibriumBlock& block, const Tensor& x) {
  block.params.validate();
  const MlpParams& p = block.params;
  if (block.kind == BlockKind::Net) return add(x, net(p, x));
  return add(x, residual_fn_expr(block.activation, p.w1, p.b1, p.w2, p.b2, x));
}

void ResidualStack::validate() const {
  if (blocks.empty()) throw Error(ErrorKind::InvalidArgument, "ResidualStack needs at least one block");
  for (std::size_t i = 0; i < blocks.size(); ++i) {
    blocks[i].validate();
    if (i > 0 && blocks[i].width() != blocks[i - 1].width()) {
      throw Error(ErrorKind::ShapeMismatch, "block " + std::to_string(i) + " width " +
                                                std::to_string(blocks[i].width()) + " does not match block " +
                                                std::to_string(i - 1));
    }
  }
  if (input_projection &&
      (input_projection->rank() != 2 || input_projection->rows() != blocks.front().width())) {
    throw Error(ErrorKind::ShapeMismatch, "input_projection " + shape_string(input_projection->shape()) +
                                              " does not produce width " + std::to_string(blocks.front().width()));
  }
  if (readout) {
    if (readout->weight.rank() != 2 || readout->weight.cols() != blocks.back().width()) {
      throw Error(ErrorKind::ShapeMismatch, "readout weight " + shape_string(readout->weight.shape()) +
                                                " does not accept width " + std::to_string(blocks.back().width()));
    }
    expect_shape("readout bias", readout->bias, {readout->weight.rows()});
  }
}

Tensor ResidualStack::embed(const Tensor& raw) const {
  return input_projection ? matmul(*input_projection, raw) : raw;
}

Tensor ResidualStack::predict_from_state(const Tensor& z) const {
  if (!readout) return z;
  return sigmoid(bias_add(matmul(readout->weight, z), readout->bias));
}

Tensor ResidualStack::forward(const Tensor& raw) const {
  Tensor x = embed(raw);
  for (const auto& block : blocks) {
    x = fix_forward(block.map(), block.inputs(x), block.initial_state(x), block.fix).z;
  }
  return predict_from_state(x);
}

}  // namespace twnn
