#pragma once

#include <cstddef>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "twnn/tensor.hpp"

namespace twnn {

/// Ordered name -> tensor map. Used for the leaves fed to a map and for the
/// cotangents returned by a pullback, keyed by the same names.
class NamedTensors {
 public:
  NamedTensors() = default;
  NamedTensors(std::initializer_list<std::pair<std::string, Tensor>> entries);

  /// Inserts or replaces.
  void set(std::string name, Tensor value);
  bool contains(std::string_view name) const noexcept;
  const Tensor& at(std::string_view name) const;
  Tensor& at(std::string_view name);

  std::size_t size() const noexcept { return names_.size(); }
  bool empty() const noexcept { return names_.empty(); }
  const std::vector<std::string>& names() const noexcept { return names_; }
  const std::vector<Tensor>& values() const noexcept { return values_; }
  const std::string& name(std::size_t i) const { return names_[i]; }
  const Tensor& value(std::size_t i) const { return values_[i]; }

  friend bool operator==(const NamedTensors&, const NamedTensors&) = default;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
};

using LeafSet = NamedTensors;
using CotangentBundle = NamedTensors;

// ---------------------------------------------------------------------------
// Forward mode

struct DualTensor {
  Tensor primal;
  Tensor tangent;

  DualTensor() = default;
  DualTensor(Tensor p, Tensor t);
  static DualTensor constant(Tensor p);
};

DualTensor matmul(const DualTensor& a, const DualTensor& b);
DualTensor add(const DualTensor& a, const DualTensor& b);
DualTensor sub(const DualTensor& a, const DualTensor& b);
DualTensor mul(const DualTensor& a, const DualTensor& b);
DualTensor scale(const DualTensor& a, double s);
DualTensor tanh(const DualTensor& a);
DualTensor sigmoid(const DualTensor& a);
DualTensor square(const DualTensor& a);
DualTensor bias_add(const DualTensor& a, const DualTensor& bias);
DualTensor sum(const DualTensor& a);
DualTensor mean(const DualTensor& a);

// ---------------------------------------------------------------------------
// Reverse mode

enum class Primitive { Leaf, Constant, MatMul, Add, Sub, Mul, Scale, Tanh, Sigmoid, Square, BiasAdd, Sum, Mean };

class Tape;

/// Handle to a value recorded on a tape. Cheap to copy; valid while the tape lives.
struct Var {
  Tape* tape = nullptr;
  std::size_t id = 0;

  const Tensor& value() const;
  const Shape& shape() const { return value().shape(); }
};

/// Linear record of primitive applications. Nodes are appended in evaluation
/// order, so operands always precede their consumers. Once sealed the tape is
/// read-only; `pullback` may then be called any number of times, from any
/// number of threads.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var leaf(std::string name, Tensor value);
  Var constant(Tensor value);
  Var record(Primitive op, Var lhs, Var rhs = {}, double scalar = 0.0);

  const Tensor& value(Var v) const;
  std::size_t size() const noexcept { return nodes_.size(); }
  const std::vector<std::string>& leaf_names() const noexcept { return leaf_names_; }

  void seal() noexcept { sealed_ = true; }
  bool sealed() const noexcept { return sealed_; }

  /// Cotangent of every leaf for output cotangent `seed`. Leaves the output
  /// does not depend on get exact zeros.
  CotangentBundle pullback(Var output, const Tensor& seed) const;

  /// Re-evaluates the recorded program with new leaf values (tape leaf order)
  /// and returns the value of `output`.
  Tensor replay(Var output, std::span<const Tensor> leaf_values) const;

 private:
  struct Node {
    Primitive op;
    std::size_t lhs;
    std::size_t rhs;
    double scalar;
    Tensor value;
  };

  Var push(Node node);

  std::vector<Node> nodes_;
  std::vector<std::size_t> leaf_nodes_;
  std::vector<std::string> leaf_names_;
  bool sealed_ = false;
};

Var matmul(Var a, Var b);
Var add(Var a, Var b);
Var sub(Var a, Var b);
Var mul(Var a, Var b);
Var scale(Var a, double s);
Var tanh(Var a);
Var sigmoid(Var a);
Var square(Var a);
Var bias_add(Var a, Var bias);
Var sum(Var a);
Var mean(Var a);

// Constants inside a generic map body.
inline Tensor lift(const Tensor&, Tensor c) { return c; }
inline DualTensor lift(const DualTensor&, Tensor c) { return DualTensor::constant(std::move(c)); }
inline Var lift(const Var& like, Tensor c) { return like.tape->constant(std::move(c)); }

// ---------------------------------------------------------------------------
// Differentiable functions

/// A function of named tensor leaves built from registered primitives. The
/// primal path is mandatory; a map that does not provide dual or taped
/// evaluation cannot be differentiated and reports UnregisteredPrimitive.
class DifferentiableMap {
 public:
  virtual ~DifferentiableMap() = default;

  virtual std::vector<std::string> leaf_names() const = 0;
  virtual Tensor evaluate(std::span<const Tensor> leaves) const = 0;
  virtual DualTensor evaluate(std::span<const DualTensor> leaves) const;
  virtual Var evaluate(std::span<const Var> leaves) const;

  /// Evaluates with leaves looked up by name.
  Tensor operator()(const LeafSet& leaves) const;
};

/// Implements all three evaluation modes from one
/// `template <class V> V apply(std::span<const V>) const` in Derived.
template <class Derived>
class GenericMap : public DifferentiableMap {
 public:
  Tensor evaluate(std::span<const Tensor> leaves) const final { return self().template apply<Tensor>(leaves); }
  DualTensor evaluate(std::span<const DualTensor> leaves) const final {
    return self().template apply<DualTensor>(leaves);
  }
  Var evaluate(std::span<const Var> leaves) const final { return self().template apply<Var>(leaves); }

 private:
  const Derived& self() const { return static_cast<const Derived&>(*this); }
};

/// Leaf values of `f` in declaration order; throws InvalidArgument if one is missing.
std::vector<Tensor> ordered_leaves(const DifferentiableMap& f, const LeafSet& leaves);

/// Maps an output cotangent to leaf cotangents. Holds the tape of one primal
/// evaluation and can be invoked repeatedly.
class Pullback {
 public:
  Pullback(std::shared_ptr<const Tape> tape, Var output);

  CotangentBundle operator()(const Tensor& output_cotangent) const;
  const Tensor& output() const { return tape_->value(output_); }
  const Tape& tape() const noexcept { return *tape_; }

 private:
  std::shared_ptr<const Tape> tape_;
  Var output_;
};

struct VjpResult {
  Tensor output;
  Pullback pullback;
};

/// One forward sweep of dual numbers: (f(x), J v). Leaves absent from
/// `tangents` get a zero tangent.
DualTensor jvp(const DifferentiableMap& f, const LeafSet& primals, const LeafSet& tangents);
/// Single-leaf form.
DualTensor jvp(const DifferentiableMap& f, const Tensor& x, const Tensor& v);

VjpResult vjp(const DifferentiableMap& f, const LeafSet& leaves);

/// Gradient of a one-element output: vjp followed by pullback(1).
CotangentBundle grad(const DifferentiableMap& f, const LeafSet& leaves);

}  // namespace twnn
