#include "twnn/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "twnn/error.hpp"

namespace twnn {

std::string_view to_string(ErrorKind kind) noexcept {
  switch (kind) {
    case ErrorKind::ShapeMismatch: return "ShapeMismatch";
    case ErrorKind::InvalidArgument: return "InvalidArgument";
    case ErrorKind::UnregisteredPrimitive: return "UnregisteredPrimitive";
    case ErrorKind::NotScalarOutput: return "NotScalarOutput";
    case ErrorKind::Diverged: return "Diverged";
    case ErrorKind::MissingGradient: return "MissingGradient";
    case ErrorKind::DataExhausted: return "DataExhausted";
    case ErrorKind::BadMagic: return "BadMagic";
    case ErrorKind::TruncatedFile: return "TruncatedFile";
    case ErrorKind::CountMismatch: return "CountMismatch";
    case ErrorKind::BadRecordSize: return "BadRecordSize";
    case ErrorKind::LabelOutOfRange: return "LabelOutOfRange";
    case ErrorKind::BadCheckpoint: return "BadCheckpoint";
    case ErrorKind::Io: return "Io";
  }
  return "Unknown";
}

std::size_t shape_size(const Shape& shape) noexcept {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out << 'x';
    out << shape[i];
  }
  out << ']';
  return out.str();
}

namespace {

[[noreturn]] void shape_error(const char* op, const Shape& a, const Shape& b) {
  throw Error(ErrorKind::ShapeMismatch,
              std::string(op) + ": " + shape_string(a) + " vs " + shape_string(b));
}

void require_same(const char* op, const Tensor& a, const Tensor& b) {
  if (!a.same_shape(b)) shape_error(op, a.shape(), b.shape());
}

template <class Fn>
Tensor map_unary(const Tensor& a, Fn fn) {
  Tensor out = a;
  for (double& v : out.data()) v = fn(v);
  return out;
}

template <class Fn>
Tensor map_binary(const char* op, const Tensor& a, const Tensor& b, Fn fn) {
  if (a.same_shape(b)) {
    Tensor out = a;
    auto od = out.data();
    auto bd = b.data();
    for (std::size_t i = 0; i < od.size(); ++i) od[i] = fn(od[i], bd[i]);
    return out;
  }
  if (b.rank() == 0) {
    const double s = b[0];
    return map_unary(a, [&](double v) { return fn(v, s); });
  }
  if (a.rank() == 0) {
    const double s = a[0];
    return map_unary(b, [&](double v) { return fn(s, v); });
  }
  shape_error(op, a.shape(), b.shape());
}

}  // namespace

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_size(shape_) != data_.size()) {
    throw Error(ErrorKind::ShapeMismatch, "shape " + shape_string(shape_) + " does not hold " +
                                              std::to_string(data_.size()) + " elements");
  }
}

Tensor Tensor::zeros(Shape shape) { return filled(std::move(shape), 0.0); }

Tensor Tensor::filled(Shape shape, double value) {
  const std::size_t n = shape_size(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor({}, {value}); }

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::vector<double>(values));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw Error(ErrorKind::ShapeMismatch, "ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor out = zeros({n, n});
  for (std::size_t i = 0; i < n; ++i) out.at(i, i) = 1.0;
  return out;
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw Error(ErrorKind::ShapeMismatch, "rows() on " + shape_string(shape_));
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw Error(ErrorKind::ShapeMismatch, "cols() on " + shape_string(shape_));
  return shape_[1];
}

double& Tensor::at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
double Tensor::at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

double Tensor::item() const {
  if (data_.size() != 1) {
    throw Error(ErrorKind::NotScalarOutput, "item() on " + shape_string(shape_));
  }
  return data_[0];
}

bool Tensor::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](double v) { return std::isfinite(v); });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.shape()[1] != b.shape()[0]) {
    shape_error("matmul", a.shape(), b.shape());
  }
  const std::size_t m = a.shape()[0], k = a.shape()[1], n = b.shape()[1];
  Tensor out = Tensor::zeros({m, n});
  auto ad = a.data();
  auto bd = b.data();
  auto od = out.data();
  for (std::size_t i = 0; i < m; ++i) {
    double* row = od.data() + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = ad[i * k + p];
      if (aip == 0.0) continue;
      const double* brow = bd.data() + p * n;
      for (std::size_t j = 0; j < n; ++j) row[j] += aip * brow[j];
    }
  }
  return out;
}

Tensor transpose(const Tensor& a) {
  const std::size_t m = a.rows(), n = a.cols();
  Tensor out = Tensor::zeros({n, m});
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.at(j, i) = a.at(i, j);
  return out;
}

double sigmoid(double t) noexcept {
  if (t >= 0.0) return 1.0 / (1.0 + std::exp(-t));
  const double e = std::exp(t);
  return e / (1.0 + e);
}

Tensor elementwise(UnaryOp op, const Tensor& a) {
  switch (op) {
    case UnaryOp::Tanh: return map_unary(a, [](double v) { return std::tanh(v); });
    case UnaryOp::Sigmoid: return map_unary(a, [](double v) { return sigmoid(v); });
    case UnaryOp::Square: return map_unary(a, [](double v) { return v * v; });
  }
  throw Error(ErrorKind::InvalidArgument, "unknown unary op");
}

Tensor elementwise(BinaryOp op, const Tensor& a, const Tensor& b) {
  switch (op) {
    case BinaryOp::Add: return map_binary("add", a, b, std::plus<>());
    case BinaryOp::Sub: return map_binary("sub", a, b, std::minus<>());
    case BinaryOp::Mul: return map_binary("mul", a, b, std::multiplies<>());
  }
  throw Error(ErrorKind::InvalidArgument, "unknown binary op");
}

Tensor add(const Tensor& a, const Tensor& b) { return elementwise(BinaryOp::Add, a, b); }
Tensor sub(const Tensor& a, const Tensor& b) { return elementwise(BinaryOp::Sub, a, b); }
Tensor mul(const Tensor& a, const Tensor& b) { return elementwise(BinaryOp::Mul, a, b); }
Tensor scale(const Tensor& a, double s) {
  return map_unary(a, [s](double v) { return s * v; });
}
Tensor tanh(const Tensor& a) { return elementwise(UnaryOp::Tanh, a); }
Tensor sigmoid(const Tensor& a) { return elementwise(UnaryOp::Sigmoid, a); }
Tensor square(const Tensor& a) { return elementwise(UnaryOp::Square, a); }

Tensor bias_add(const Tensor& a, const Tensor& bias) {
  if (a.rank() != 2 || bias.rank() != 1 || bias.shape()[0] != a.shape()[0]) {
    shape_error("bias_add", a.shape(), bias.shape());
  }
  Tensor out = a;
  const std::size_t m = a.shape()[0], n = a.shape()[1];
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out.at(i, j) += bias[i];
  return out;
}

Tensor row_sum(const Tensor& a) {
  const std::size_t m = a.rows(), n = a.cols();
  Tensor out = Tensor::zeros({m});
  for (std::size_t i = 0; i < m; ++i) {
    double s = 0.0;
    for (std::size_t j = 0; j < n; ++j) s += a.at(i, j);
    out[i] = s;
  }
  return out;
}

Tensor sum(const Tensor& a) {
  return Tensor::scalar(std::accumulate(a.data().begin(), a.data().end(), 0.0));
}

Tensor mean(const Tensor& a) {
  if (a.size() == 0) throw Error(ErrorKind::InvalidArgument, "mean of empty tensor");
  return Tensor::scalar(sum(a)[0] / static_cast<double>(a.size()));
}

double norm_inf_diff(const Tensor& a, const Tensor& b) {
  require_same("norm_inf_diff", a, b);
  double m = 0.0;
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < ad.size(); ++i) {
    const double d = std::abs(ad[i] - bd[i]);
    if (std::isnan(d)) return d;
    m = std::max(m, d);
  }
  return m;
}

double norm_inf(const Tensor& a) noexcept {
  double m = 0.0;
  for (double v : a.data()) {
    if (std::isnan(v)) return v;
    m = std::max(m, std::abs(v));
  }
  return m;
}

double norm_l2(const Tensor& a) noexcept {
  double s = 0.0;
  for (double v : a.data()) s += v * v;
  return std::sqrt(s);
}

double inner(const Tensor& a, const Tensor& b) {
  require_same("inner", a, b);
  double s = 0.0;
  auto ad = a.data();
  auto bd = b.data();
  for (std::size_t i = 0; i < ad.size(); ++i) s += ad[i] * bd[i];
  return s;
}

Tensor operator+(const Tensor& a, const Tensor& b) { return add(a, b); }
Tensor operator-(const Tensor& a, const Tensor& b) { return sub(a, b); }
Tensor operator*(double s, const Tensor& a) { return scale(a, s); }

}  // namespace twnn
