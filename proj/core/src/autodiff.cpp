#include "twnn/autodiff.hpp"

#include <algorithm>
#include <optional>

#include "twnn/error.hpp"

namespace twnn {

// ---------------------------------------------------------------------------
// NamedTensors

NamedTensors::NamedTensors(std::initializer_list<std::pair<std::string, Tensor>> entries) {
  for (const auto& [name, value] : entries) set(name, value);
}

void NamedTensors::set(std::string name, Tensor value) {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it != names_.end()) {
    values_[static_cast<std::size_t>(it - names_.begin())] = std::move(value);
    return;
  }
  names_.push_back(std::move(name));
  values_.push_back(std::move(value));
}

bool NamedTensors::contains(std::string_view name) const noexcept {
  return std::find(names_.begin(), names_.end(), name) != names_.end();
}

const Tensor& NamedTensors::at(std::string_view name) const {
  auto it = std::find(names_.begin(), names_.end(), name);
  if (it == names_.end()) throw Error(ErrorKind::InvalidArgument, "no tensor named '" + std::string(name) + "'");
  return values_[static_cast<std::size_t>(it - names_.begin())];
}

Tensor& NamedTensors::at(std::string_view name) {
  return const_cast<Tensor&>(std::as_const(*this).at(name));
}

// ---------------------------------------------------------------------------
// Forward mode

DualTensor::DualTensor(Tensor p, Tensor t) : primal(std::move(p)), tangent(std::move(t)) {
  if (!primal.same_shape(tangent)) {
    throw Error(ErrorKind::ShapeMismatch,
                "tangent " + shape_string(tangent.shape()) + " for primal " + shape_string(primal.shape()));
  }
}

DualTensor DualTensor::constant(Tensor p) {
  Tensor t = Tensor::zeros(p.shape());
  return {std::move(p), std::move(t)};
}

DualTensor matmul(const DualTensor& a, const DualTensor& b) {
  return {matmul(a.primal, b.primal), add(matmul(a.tangent, b.primal), matmul(a.primal, b.tangent))};
}

DualTensor add(const DualTensor& a, const DualTensor& b) {
  return {add(a.primal, b.primal), add(a.tangent, b.tangent)};
}

DualTensor sub(const DualTensor& a, const DualTensor& b) {
  return {sub(a.primal, b.primal), sub(a.tangent, b.tangent)};
}

DualTensor mul(const DualTensor& a, const DualTensor& b) {
  return {mul(a.primal, b.primal), add(mul(a.tangent, b.primal), mul(a.primal, b.tangent))};
}

DualTensor scale(const DualTensor& a, double s) { return {scale(a.primal, s), scale(a.tangent, s)}; }

DualTensor tanh(const DualTensor& a) {
  Tensor y = tanh(a.primal);
  Tensor t = a.tangent;
  for (std::size_t i = 0; i < t.size(); ++i) t[i] *= 1.0 - y[i] * y[i];
  return {std::move(y), std::move(t)};
}

DualTensor sigmoid(const DualTensor& a) {
  Tensor y = sigmoid(a.primal);
  Tensor t = a.tangent;
  for (std::size_t i = 0; i < t.size(); ++i) t[i] *= y[i] * (1.0 - y[i]);
  return {std::move(y), std::move(t)};
}

DualTensor square(const DualTensor& a) {
  Tensor t = a.tangent;
  for (std::size_t i = 0; i < t.size(); ++i) t[i] *= 2.0 * a.primal[i];
  return {square(a.primal), std::move(t)};
}

DualTensor bias_add(const DualTensor& a, const DualTensor& bias) {
  return {bias_add(a.primal, bias.primal), bias_add(a.tangent, bias.tangent)};
}

DualTensor sum(const DualTensor& a) { return {sum(a.primal), sum(a.tangent)}; }
DualTensor mean(const DualTensor& a) { return {mean(a.primal), mean(a.tangent)}; }

// ---------------------------------------------------------------------------
// Tape

const Tensor& Var::value() const {
  if (!tape) throw Error(ErrorKind::InvalidArgument, "Var is not attached to a tape");
  return tape->value(*this);
}

namespace {

Tensor evaluate_node(Primitive op, const Tensor* a, const Tensor* b, double s) {
  switch (op) {
    case Primitive::MatMul: return matmul(*a, *b);
    case Primitive::Add: return add(*a, *b);
    case Primitive::Sub: return sub(*a, *b);
    case Primitive::Mul: return mul(*a, *b);
    case Primitive::Scale: return scale(*a, s);
    case Primitive::Tanh: return tanh(*a);
    case Primitive::Sigmoid: return sigmoid(*a);
    case Primitive::Square: return square(*a);
    case Primitive::BiasAdd: return bias_add(*a, *b);
    case Primitive::Sum: return sum(*a);
    case Primitive::Mean: return mean(*a);
    case Primitive::Leaf:
    case Primitive::Constant: break;
  }
  throw Error(ErrorKind::UnregisteredPrimitive, "no evaluation rule");
}

bool is_binary(Primitive op) {
  return op == Primitive::MatMul || op == Primitive::Add || op == Primitive::Sub || op == Primitive::Mul ||
         op == Primitive::BiasAdd;
}

// Reduces a broadcast cotangent back to the operand's shape.
Tensor unbroadcast(Tensor cot, const Tensor& operand) {
  if (cot.same_shape(operand)) return cot;
  return sum(cot);
}

void accumulate(std::optional<Tensor>& slot, Tensor contribution) {
  if (slot) {
    auto d = slot->data();
    auto c = contribution.data();
    for (std::size_t i = 0; i < d.size(); ++i) d[i] += c[i];
  } else {
    slot = std::move(contribution);
  }
}

}  // namespace

Var Tape::push(Node node) {
  if (sealed_) throw Error(ErrorKind::InvalidArgument, "cannot record on a sealed tape");
  nodes_.push_back(std::move(node));
  return Var{this, nodes_.size() - 1};
}

Var Tape::leaf(std::string name, Tensor value) {
  Var v = push(Node{Primitive::Leaf, 0, 0, 0.0, std::move(value)});
  leaf_nodes_.push_back(v.id);
  leaf_names_.push_back(std::move(name));
  return v;
}

Var Tape::constant(Tensor value) { return push(Node{Primitive::Constant, 0, 0, 0.0, std::move(value)}); }

Var Tape::record(Primitive op, Var lhs, Var rhs, double scalar) {
  if (op == Primitive::Leaf || op == Primitive::Constant) {
    throw Error(ErrorKind::InvalidArgument, "use leaf() or constant()");
  }
  if (lhs.tape != this || (is_binary(op) && rhs.tape != this)) {
    throw Error(ErrorKind::InvalidArgument, "operand recorded on a different tape");
  }
  const Tensor* b = is_binary(op) ? &nodes_[rhs.id].value : nullptr;
  Tensor value = evaluate_node(op, &nodes_[lhs.id].value, b, scalar);
  return push(Node{op, lhs.id, is_binary(op) ? rhs.id : 0, scalar, std::move(value)});
}

const Tensor& Tape::value(Var v) const {
  if (v.tape != this || v.id >= nodes_.size()) throw Error(ErrorKind::InvalidArgument, "Var not on this tape");
  return nodes_[v.id].value;
}

CotangentBundle Tape::pullback(Var output, const Tensor& seed) const {
  const Tensor& out = value(output);
  if (!seed.same_shape(out)) {
    throw Error(ErrorKind::ShapeMismatch,
                "output cotangent " + shape_string(seed.shape()) + " for output " + shape_string(out.shape()));
  }
  std::vector<std::optional<Tensor>> adj(output.id + 1);
  adj[output.id] = seed;

  for (std::size_t k = output.id + 1; k-- > 0;) {
    if (!adj[k]) continue;
    const Node& n = nodes_[k];
    const Tensor& g = *adj[k];
    switch (n.op) {
      case Primitive::Leaf:
      case Primitive::Constant:
        break;
      case Primitive::MatMul: {
        const Tensor& a = nodes_[n.lhs].value;
        const Tensor& b = nodes_[n.rhs].value;
        accumulate(adj[n.lhs], matmul(g, transpose(b)));
        accumulate(adj[n.rhs], matmul(transpose(a), g));
        break;
      }
      case Primitive::Add:
        accumulate(adj[n.lhs], unbroadcast(g, nodes_[n.lhs].value));
        accumulate(adj[n.rhs], unbroadcast(g, nodes_[n.rhs].value));
        break;
      case Primitive::Sub:
        accumulate(adj[n.lhs], unbroadcast(g, nodes_[n.lhs].value));
        accumulate(adj[n.rhs], unbroadcast(scale(g, -1.0), nodes_[n.rhs].value));
        break;
      case Primitive::Mul: {
        const Tensor& a = nodes_[n.lhs].value;
        const Tensor& b = nodes_[n.rhs].value;
        accumulate(adj[n.lhs], unbroadcast(mul(g, b), a));
        accumulate(adj[n.rhs], unbroadcast(mul(g, a), b));
        break;
      }
      case Primitive::Scale:
        accumulate(adj[n.lhs], scale(g, n.scalar));
        break;
      case Primitive::Tanh: {
        Tensor c = g;
        for (std::size_t i = 0; i < c.size(); ++i) c[i] *= 1.0 - n.value[i] * n.value[i];
        accumulate(adj[n.lhs], std::move(c));
        break;
      }
      case Primitive::Sigmoid: {
        Tensor c = g;
        for (std::size_t i = 0; i < c.size(); ++i) c[i] *= n.value[i] * (1.0 - n.value[i]);
        accumulate(adj[n.lhs], std::move(c));
        break;
      }
      case Primitive::Square: {
        const Tensor& a = nodes_[n.lhs].value;
        Tensor c = g;
        for (std::size_t i = 0; i < c.size(); ++i) c[i] *= 2.0 * a[i];
        accumulate(adj[n.lhs], std::move(c));
        break;
      }
      case Primitive::BiasAdd:
        accumulate(adj[n.lhs], g);
        accumulate(adj[n.rhs], row_sum(g));
        break;
      case Primitive::Sum:
        accumulate(adj[n.lhs], Tensor::filled(nodes_[n.lhs].value.shape(), g[0]));
        break;
      case Primitive::Mean: {
        const Tensor& a = nodes_[n.lhs].value;
        accumulate(adj[n.lhs], Tensor::filled(a.shape(), g[0] / static_cast<double>(a.size())));
        break;
      }
    }
  }

  CotangentBundle bundle;
  for (std::size_t i = 0; i < leaf_nodes_.size(); ++i) {
    const std::size_t id = leaf_nodes_[i];
    if (id <= output.id && adj[id]) {
      bundle.set(leaf_names_[i], std::move(*adj[id]));
    } else {
      bundle.set(leaf_names_[i], Tensor::zeros(nodes_[id].value.shape()));
    }
  }
  return bundle;
}

Tensor Tape::replay(Var output, std::span<const Tensor> leaf_values) const {
  value(output);
  if (leaf_values.size() != leaf_nodes_.size()) {
    throw Error(ErrorKind::InvalidArgument, "replay expects " + std::to_string(leaf_nodes_.size()) + " leaves");
  }
  std::vector<Tensor> values(output.id + 1);
  std::size_t next_leaf = 0;
  for (std::size_t k = 0; k <= output.id; ++k) {
    const Node& n = nodes_[k];
    if (n.op == Primitive::Leaf) {
      values[k] = leaf_values[next_leaf++];
    } else if (n.op == Primitive::Constant) {
      values[k] = n.value;
    } else {
      values[k] = evaluate_node(n.op, &values[n.lhs], is_binary(n.op) ? &values[n.rhs] : nullptr, n.scalar);
    }
  }
  return values[output.id];
}

Var matmul(Var a, Var b) { return a.tape->record(Primitive::MatMul, a, b); }
Var add(Var a, Var b) { return a.tape->record(Primitive::Add, a, b); }
Var sub(Var a, Var b) { return a.tape->record(Primitive::Sub, a, b); }
Var mul(Var a, Var b) { return a.tape->record(Primitive::Mul, a, b); }
Var scale(Var a, double s) { return a.tape->record(Primitive::Scale, a, {}, s); }
Var tanh(Var a) { return a.tape->record(Primitive::Tanh, a); }
Var sigmoid(Var a) { return a.tape->record(Primitive::Sigmoid, a); }
Var square(Var a) { return a.tape->record(Primitive::Square, a); }
Var bias_add(Var a, Var bias) { return a.tape->record(Primitive::BiasAdd, a, bias); }
Var sum(Var a) { return a.tape->record(Primitive::Sum, a); }
Var mean(Var a) { return a.tape->record(Primitive::Mean, a); }

// ---------------------------------------------------------------------------
// Differentiable maps

DualTensor DifferentiableMap::evaluate(std::span<const DualTensor>) const {
  throw Error(ErrorKind::UnregisteredPrimitive, "map has no tangent rule");
}

Var DifferentiableMap::evaluate(std::span<const Var>) const {
  throw Error(ErrorKind::UnregisteredPrimitive, "map has no adjoint rule");
}

Tensor DifferentiableMap::operator()(const LeafSet& leaves) const {
  const auto values = ordered_leaves(*this, leaves);
  return evaluate(std::span<const Tensor>(values));
}

std::vector<Tensor> ordered_leaves(const DifferentiableMap& f, const LeafSet& leaves) {
  std::vector<Tensor> out;
  for (const auto& name : f.leaf_names()) out.push_back(leaves.at(name));
  return out;
}

Pullback::Pullback(std::shared_ptr<const Tape> tape, Var output) : tape_(std::move(tape)), output_(output) {}

CotangentBundle Pullback::operator()(const Tensor& output_cotangent) const {
  return tape_->pullback(output_, output_cotangent);
}

DualTensor jvp(const DifferentiableMap& f, const LeafSet& primals, const LeafSet& tangents) {
  std::vector<DualTensor> duals;
  for (const auto& name : f.leaf_names()) {
    const Tensor& p = primals.at(name);
    duals.emplace_back(p, tangents.contains(name) ? tangents.at(name) : Tensor::zeros(p.shape()));
  }
  return f.evaluate(std::span<const DualTensor>(duals));
}

DualTensor jvp(const DifferentiableMap& f, const Tensor& x, const Tensor& v) {
  const auto names = f.leaf_names();
  if (names.size() != 1) throw Error(ErrorKind::InvalidArgument, "single-leaf jvp on a multi-leaf map");
  return jvp(f, LeafSet{{names[0], x}}, LeafSet{{names[0], v}});
}

VjpResult vjp(const DifferentiableMap& f, const LeafSet& leaves) {
  auto tape = std::make_shared<Tape>();
  std::vector<Var> vars;
  for (const auto& name : f.leaf_names()) vars.push_back(tape->leaf(name, leaves.at(name)));
  Var out = f.evaluate(std::span<const Var>(vars));
  if (out.tape != tape.get()) throw Error(ErrorKind::InvalidArgument, "map returned a foreign Var");
  tape->seal();
  Tensor value = tape->value(out);
  return VjpResult{std::move(value), Pullback(std::move(tape), out)};
}

CotangentBundle grad(const DifferentiableMap& f, const LeafSet& leaves) {
  VjpResult r = vjp(f, leaves);
  if (r.output.size() != 1) {
    throw Error(ErrorKind::NotScalarOutput, "grad of output " + shape_string(r.output.shape()));
  }
  return r.pullback(Tensor::filled(r.output.shape(), 1.0));
}

}  // namespace twnn
