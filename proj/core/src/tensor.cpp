#include "cptr/tensor.hpp"

#include <cmath>
#include <numeric>

namespace cptr {

namespace {

Index checked_size(const std::vector<Index>& shape) {
  if (shape.empty() || shape.size() > 4) {
    throw ShapeError("tensor order must be between 1 and 4, got " +
                     std::to_string(shape.size()));
  }
  Index n = 1;
  for (Index d : shape) {
    if (d < 1) throw ShapeError("every shape entry must be >= 1");
    n *= d;
  }
  return n;
}

void require_order3(const DenseTensor& t) {
  if (t.order() != 3) {
    throw ShapeError("expected an order-3 tensor, got order " +
                     std::to_string(t.order()));
  }
}

void require_mode(int n) {
  if (n < 1 || n > 3) throw ShapeError("mode must be 1, 2 or 3");
}

}  // namespace

DenseTensor::DenseTensor(std::vector<Index> shape) : shape_(std::move(shape)) {
  data_.assign(static_cast<std::size_t>(checked_size(shape_)), 0.0);
}

DenseTensor::DenseTensor(std::vector<Index> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  const Index n = checked_size(shape_);
  if (static_cast<Index>(data_.size()) != n) {
    throw ShapeError("data length does not match shape product");
  }
  for (double v : data_) {
    if (!std::isfinite(v)) throw DomainError("tensor entries must be finite");
  }
}

DenseTensor DenseTensor::from_matrix(const Matrix& m) {
  DenseTensor t({m.rows(), m.cols()});
  for (Index i = 0; i < m.rows(); ++i)
    for (Index j = 0; j < m.cols(); ++j) t[i * m.cols() + j] = m(i, j);
  return t;
}

Matrix DenseTensor::to_matrix() const {
  if (order() != 2) throw ShapeError("to_matrix requires an order-2 tensor");
  Matrix m(shape_[0], shape_[1]);
  for (Index i = 0; i < shape_[0]; ++i)
    for (Index j = 0; j < shape_[1]; ++j) m(i, j) = (*this)[i * shape_[1] + j];
  return m;
}

DenseTensor& DenseTensor::operator+=(const DenseTensor& other) {
  if (!same_shape(other)) throw ShapeError("shape mismatch in tensor add");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += other.data_[i];
  return *this;
}

DenseTensor& DenseTensor::operator-=(const DenseTensor& other) {
  if (!same_shape(other)) throw ShapeError("shape mismatch in tensor sub");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= other.data_[i];
  return *this;
}

DenseTensor& DenseTensor::operator*=(double s) {
  for (double& v : data_) v *= s;
  return *this;
}

Matrix mode_n_unfold(const DenseTensor& t, int n) {
  require_order3(t);
  require_mode(n);
  const Index d1 = t.dim(0), d2 = t.dim(1), d3 = t.dim(2);
  Matrix m;
  switch (n) {
    case 1: {
      m.resize(d1, d2 * d3);
      for (Index i1 = 0; i1 < d1; ++i1)
        for (Index i2 = 0; i2 < d2; ++i2)
          for (Index i3 = 0; i3 < d3; ++i3) m(i1, i2 + i3 * d2) = t.at3(i1, i2, i3);
      break;
    }
    case 2: {
      m.resize(d2, d1 * d3);
      for (Index i1 = 0; i1 < d1; ++i1)
        for (Index i2 = 0; i2 < d2; ++i2)
          for (Index i3 = 0; i3 < d3; ++i3) m(i2, i1 + i3 * d1) = t.at3(i1, i2, i3);
      break;
    }
    default: {
      m.resize(d3, d1 * d2);
      for (Index i1 = 0; i1 < d1; ++i1)
        for (Index i2 = 0; i2 < d2; ++i2)
          for (Index i3 = 0; i3 < d3; ++i3) m(i3, i1 + i2 * d1) = t.at3(i1, i2, i3);
      break;
    }
  }
  return m;
}

DenseTensor mode_n_fold(const Matrix& m, int n, const std::array<Index, 3>& shape) {
  require_mode(n);
  const Index d1 = shape[0], d2 = shape[1], d3 = shape[2];
  const Index dn = shape[static_cast<std::size_t>(n - 1)];
  const Index cols = d1 * d2 * d3 / dn;
  if (m.rows() != dn || m.cols() != cols) {
    throw ShapeError("matrix shape inconsistent with fold target");
  }
  DenseTensor t({d1, d2, d3});
  switch (n) {
    case 1:
      for (Index i1 = 0; i1 < d1; ++i1)
        for (Index i2 = 0; i2 < d2; ++i2)
          for (Index i3 = 0; i3 < d3; ++i3) t.at3(i1, i2, i3) = m(i1, i2 + i3 * d2);
      break;
    case 2:
      for (Index i1 = 0; i1 < d1; ++i1)
        for (Index i2 = 0; i2 < d2; ++i2)
          for (Index i3 = 0; i3 < d3; ++i3) t.at3(i1, i2, i3) = m(i2, i1 + i3 * d1);
      break;
    default:
      for (Index i1 = 0; i1 < d1; ++i1)
        for (Index i2 = 0; i2 < d2; ++i2)
          for (Index i3 = 0; i3 < d3; ++i3) t.at3(i1, i2, i3) = m(i3, i1 + i2 * d1);
      break;
  }
  return t;
}

DenseTensor mode_n_product(const DenseTensor& t, const Matrix& m, int n) {
  require_order3(t);
  require_mode(n);
  if (m.cols() != t.dim(n - 1)) {
    throw ShapeError("matrix column count does not match mode-" + std::to_string(n) +
                     " dimension");
  }
  std::array<Index, 3> shape = {t.dim(0), t.dim(1), t.dim(2)};
  shape[static_cast<std::size_t>(n - 1)] = m.rows();
  const Matrix product = m * mode_n_unfold(t, n);
  return mode_n_fold(product, n, shape);
}

double frobenius_norm(const DenseTensor& t) {
  double s = 0.0;
  for (double v : t.values()) s += v * v;
  return std::sqrt(s);
}

double relative_error(const DenseTensor& a, const DenseTensor& b) {
  if (!a.same_shape(b)) throw ShapeError("shape mismatch in relative_error");
  const double ref = frobenius_norm(a);
  if (ref == 0.0) throw DomainError("relative_error needs a nonzero reference");
  DenseTensor diff = a;
  diff -= b;
  return frobenius_norm(diff) / ref;
}

}  // namespace cptr
