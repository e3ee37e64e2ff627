#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace twnn {

using Shape = std::vector<std::size_t>;

std::size_t shape_size(const Shape& shape) noexcept;
std::string shape_string(const Shape& shape);

/// Dense row-major array of doubles. A rank-0 tensor (empty shape) holds one
/// scalar. Values are plain data: copies are deep and independent.
class Tensor {
 public:
  Tensor() : data_(1, 0.0) {}
  Tensor(Shape shape, std::vector<double> data);

  static Tensor zeros(Shape shape);
  static Tensor filled(Shape shape, double value);
  static Tensor scalar(double value);
  static Tensor vector(std::initializer_list<double> values);
  /// Rows of equal length; throws ShapeMismatch on ragged input.
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor identity(std::size_t n);

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t rows() const;
  std::size_t cols() const;

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& at(std::size_t r, std::size_t c);
  double at(std::size_t r, std::size_t c) const;

  /// The single element of a one-element tensor.
  double item() const;
  bool all_finite() const noexcept;
  bool same_shape(const Tensor& other) const noexcept { return shape_ == other.shape_; }

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

enum class UnaryOp { Tanh, Sigmoid, Square };
enum class BinaryOp { Add, Sub, Mul };

Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor elementwise(UnaryOp op, const Tensor& a);
/// Shapes must match, or one side must be rank-0 (scalar broadcast).
Tensor elementwise(BinaryOp op, const Tensor& a, const Tensor& b);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
Tensor tanh(const Tensor& a);
Tensor sigmoid(const Tensor& a);
Tensor square(const Tensor& a);
/// Adds `bias` (shape [m]) to every column of `a` (shape [m, n]).
Tensor bias_add(const Tensor& a, const Tensor& bias);
/// Sums each row of `a` ([m, n]) into a [m] vector; adjoint of bias_add in its bias.
Tensor row_sum(const Tensor& a);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);

double sigmoid(double t) noexcept;

/// max_i |a_i - b_i|
double norm_inf_diff(const Tensor& a, const Tensor& b);
double norm_inf(const Tensor& a) noexcept;
double norm_l2(const Tensor& a) noexcept;
/// Sum of elementwise products over identically shaped tensors.
double inner(const Tensor& a, const Tensor& b);

/// Tensor operators delegate to the named functions above.
Tensor operator+(const Tensor& a, const Tensor& b);
Tensor operator-(const Tensor& a, const Tensor& b);
Tensor operator*(double s, const Tensor& a);

}  // namespace twnn
