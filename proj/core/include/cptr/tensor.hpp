#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cptr {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct RankError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

/// Dense real tensor of order 1..4, row-major (last index fastest).
class DenseTensor {
 public:
  DenseTensor() = default;

  // Zero-filled tensor of the given shape.
  explicit DenseTensor(std::vector<Index> shape);

  // Takes ownership of data; validates length and finiteness.
  DenseTensor(std::vector<Index> shape, std::vector<double> data);

  static DenseTensor from_matrix(const Matrix& m);

  int order() const { return static_cast<int>(shape_.size()); }
  const std::vector<Index>& shape() const { return shape_; }
  Index dim(int k) const { return shape_.at(static_cast<std::size_t>(k)); }
  Index size() const { return static_cast<Index>(data_.size()); }

  double* data() { return data_.data(); }
  const double* data() const { return data_.data(); }
  std::span<const double> values() const { return data_; }

  double& operator[](Index flat) { return data_[static_cast<std::size_t>(flat)]; }
  double operator[](Index flat) const { return data_[static_cast<std::size_t>(flat)]; }

  double& at3(Index i, Index j, Index k) {
    return data_[static_cast<std::size_t>((i * shape_[1] + j) * shape_[2] + k)];
  }
  double at3(Index i, Index j, Index k) const {
    return data_[static_cast<std::size_t>((i * shape_[1] + j) * shape_[2] + k)];
  }

  // Order-2 view as an Eigen matrix (copies).
  Matrix to_matrix() const;

  bool same_shape(const DenseTensor& other) const { return shape_ == other.shape_; }

  DenseTensor& operator+=(const DenseTensor& other);
  DenseTensor& operator-=(const DenseTensor& other);
  DenseTensor& operator*=(double s);

 private:
  std::vector<Index> shape_;
  std::vector<double> data_;
};

// Mode-n unfolding of an order-3 tensor, n in {1,2,3}.
// Column ordering: j = sum_{k != n} i_k * J_k with J_k = prod_{m < k, m != n} d_m,
// i.e. the earliest remaining index varies fastest (Kolda-Bader convention).
Matrix mode_n_unfold(const DenseTensor& t, int n);

// Exact inverse of mode_n_unfold for the same mode and target shape.
DenseTensor mode_n_fold(const Matrix& m, int n, const std::array<Index, 3>& shape);

// Tensor-times-matrix along mode n: result has mode-n dimension m.rows().
DenseTensor mode_n_product(const DenseTensor& t, const Matrix& m, int n);

double frobenius_norm(const DenseTensor& t);

// ||a - b||_F / ||a||_F; throws DomainError when ||a|| == 0.
double relative_error(const DenseTensor& a, const DenseTensor& b);

}  // namespace cptr
