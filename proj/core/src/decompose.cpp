#include "cptr/decompose.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <random>

namespace cptr {

namespace {

void fix_column_signs(Matrix& f) {
  for (Index c = 0; c < f.cols(); ++c) {
    Index imax = 0;
    f.col(c).cwiseAbs().maxCoeff(&imax);
    if (f(imax, c) < 0.0) f.col(c) = -f.col(c);
  }
}

void check_ranks(const DenseTensor& t, const std::array<Index, 3>& ranks) {
  if (t.order() != 3) throw ShapeError("decomposition requires an order-3 tensor");
  for (int k = 0; k < 3; ++k) {
    if (ranks[static_cast<std::size_t>(k)] < 1) {
      throw RankError("ranks must be >= 1");
    }
    if (ranks[static_cast<std::size_t>(k)] > t.dim(k)) {
      throw RankError("rank exceeds mode-" + std::to_string(k + 1) + " dimension");
    }
  }
}

DenseTensor core_from_factors(const DenseTensor& t, const Matrix& u, const Matrix& v,
                              const Matrix& z) {
  DenseTensor c = mode_n_product(t, u.transpose(), 1);
  c = mode_n_product(c, v.transpose(), 2);
  return mode_n_product(c, z.transpose(), 3);
}

// Khatri-Rao product with the fast factor's row index varying fastest,
// matching the unfolding column order.
Matrix khatri_rao(const Matrix& slow, const Matrix& fast) {
  Matrix out(slow.rows() * fast.rows(), slow.cols());
  for (Index s = 0; s < slow.rows(); ++s)
    for (Index f = 0; f < fast.rows(); ++f)
      out.row(f + s * fast.rows()) =
          fast.row(f).cwiseProduct(slow.row(s));
  return out;
}

// Solve X * gram = rhs for X, falling back to a tiny ridge when the
// normal equations are singular.
Matrix solve_normal_eqs(const Matrix& gram, const Matrix& rhs) {
  Matrix sol = gram.ldlt().solve(rhs.transpose()).transpose();
  if (!sol.allFinite() || (sol * gram - rhs).norm() > 1e-8 * (rhs.norm() + 1.0)) {
    Matrix ridged = gram + 1e-12 * Matrix::Identity(gram.rows(), gram.cols());
    sol = ridged.ldlt().solve(rhs.transpose()).transpose();
  }
  return sol;
}

// Normalize columns into weights; zero columns get weight 0 and a unit
// placeholder direction to keep the unit-column invariant.
void normalize_columns(Matrix& f, Vector& weights) {
  weights.resize(f.cols());
  for (Index c = 0; c < f.cols(); ++c) {
    const double n = f.col(c).norm();
    weights[c] = n;
    if (n > 0.0) {
      f.col(c) /= n;
    } else {
      f.col(c).setZero();
      f(c % f.rows(), c) = 1.0;
    }
  }
}

}  // namespace

SvdThin svd_thin(const Matrix& m) {
  if (!m.allFinite()) throw DomainError("svd_thin requires finite entries");
  Eigen::JacobiSVD<Matrix> svd(m, Eigen::ComputeThinU | Eigen::ComputeThinV);
  return SvdThin{svd.matrixU(), svd.singularValues(), svd.matrixV()};
}

TuckerFactors hosvd(const DenseTensor& t, const std::array<Index, 3>& ranks) {
  check_ranks(t, ranks);
  std::array<Matrix, 3> factors;
  for (int n = 1; n <= 3; ++n) {
    SvdThin s = svd_thin(mode_n_unfold(t, n));
    Matrix f = s.left.leftCols(ranks[static_cast<std::size_t>(n - 1)]);
    fix_column_signs(f);
    factors[static_cast<std::size_t>(n - 1)] = std::move(f);
  }
  DenseTensor core = core_from_factors(t, factors[0], factors[1], factors[2]);
  return TuckerFactors{std::move(core), std::move(factors[0]), std::move(factors[1]),
                       std::move(factors[2])};
}

TuckerFactors hooi(const DenseTensor& t, const std::array<Index, 3>& ranks,
                   int max_iters, double tol, std::vector<double>* error_trace) {
  if (max_iters < 0) throw RankError("max_iters must be nonnegative");
  if (tol <= 0.0) throw DomainError("tol must be positive");
  TuckerFactors f = hosvd(t, ranks);

  auto recon_error = [&](const TuckerFactors& g) {
    DenseTensor diff = t;
    diff -= tucker_reconstruct(g);
    return frobenius_norm(diff);
  };

  double err = recon_error(f);
  if (error_trace) error_trace->push_back(err);

  for (int it = 0; it < max_iters; ++it) {
    for (int n = 1; n <= 3; ++n) {
      // Project along the other two modes, then refresh this mode's basis.
      DenseTensor y = t;
      for (int m = 1; m <= 3; ++m) {
        if (m == n) continue;
        y = mode_n_product(y, f.factor(m).transpose(), m);
      }
      SvdThin s = svd_thin(mode_n_unfold(y, n));
      Matrix basis = s.left.leftCols(ranks[static_cast<std::size_t>(n - 1)]);
      fix_column_signs(basis);
      switch (n) {
        case 1: f.factor_u = std::move(basis); break;
        case 2: f.factor_v = std::move(basis); break;
        default: f.factor_z = std::move(basis); break;
      }
    }
    f.core = core_from_factors(t, f.factor_u, f.factor_v, f.factor_z);
    const double next = recon_error(f);
    if (error_trace) error_trace->push_back(next);
    const double improvement = err - next;
    err = next;
    if (improvement < tol) break;
  }
  return f;
}

CPFactors cp_als(const DenseTensor& t, Index rank, int max_iters, double tol,
                 std::uint64_t seed, std::vector<double>* objective_trace) {
  if (t.order() != 3) throw ShapeError("cp_als requires an order-3 tensor");
  if (rank < 1) throw RankError("cp rank must be >= 1");
  const Index d1 = t.dim(0), d2 = t.dim(1), d3 = t.dim(2);
  const Index max_rank = std::min({d2 * d3, d1 * d3, d1 * d2});
  if (rank > max_rank) throw RankError("cp rank exceeds attainable rank bound");
  if (max_iters < 0) throw RankError("max_iters must be nonnegative");
  if (tol <= 0.0) throw DomainError("tol must be positive");

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  auto random_factor = [&](Index rows) {
    Matrix f(rows, rank);
    for (Index i = 0; i < rows; ++i)
      for (Index j = 0; j < rank; ++j) f(i, j) = dist(rng);
    Vector unused;
    normalize_columns(f, unused);
    return f;
  };

  CPFactors f;
  f.factor_a = random_factor(d1);
  f.factor_b = random_factor(d2);
  f.factor_c = random_factor(d3);
  f.weights = Vector::Ones(rank);

  const Matrix x1 = mode_n_unfold(t, 1);
  const Matrix x2 = mode_n_unfold(t, 2);
  const Matrix x3 = mode_n_unfold(t, 3);

  auto objective = [&](const CPFactors& g) {
    DenseTensor diff = t;
    diff -= cp_reconstruct(g);
    return frobenius_norm(diff);
  };

  double prev = objective(f);
  for (int it = 0; it < max_iters; ++it) {
    // Mode 1: columns ordered with i2 fastest -> KR(slow=C, fast=B).
    Matrix gram = (f.factor_b.transpose() * f.factor_b)
                      .cwiseProduct(f.factor_c.transpose() * f.factor_c);
    f.factor_a = solve_normal_eqs(gram, x1 * khatri_rao(f.factor_c, f.factor_b));
    normalize_columns(f.factor_a, f.weights);

    gram = (f.factor_a.transpose() * f.factor_a)
               .cwiseProduct(f.factor_c.transpose() * f.factor_c);
    f.factor_b = solve_normal_eqs(gram, x2 * khatri_rao(f.factor_c, f.factor_a));
    normalize_columns(f.factor_b, f.weights);

    gram = (f.factor_a.transpose() * f.factor_a)
               .cwiseProduct(f.factor_b.transpose() * f.factor_b);
    f.factor_c = solve_normal_eqs(gram, x3 * khatri_rao(f.factor_b, f.factor_a));
    normalize_columns(f.factor_c, f.weights);

    const double obj = objective(f);
    if (objective_trace) objective_trace->push_back(obj);
    const double improvement = prev - obj;
    prev = obj;
    if (improvement < tol) break;
  }
  return f;
}

DenseTensor tucker_reconstruct(const TuckerFactors& f) {
  if (f.core.order() != 3) throw ShapeError("tucker core must be order 3");
  if (f.factor_u.cols() != f.core.dim(0) || f.factor_v.cols() != f.core.dim(1) ||
      f.factor_z.cols() != f.core.dim(2)) {
    throw ShapeError("factor column counts do not match core shape");
  }
  DenseTensor w = mode_n_product(f.core, f.factor_u, 1);
  w = mode_n_product(w, f.factor_v, 2);
  return mode_n_product(w, f.factor_z, 3);
}

DenseTensor cp_reconstruct(const CPFactors& f) {
  const Index r = f.weights.size();
  if (f.factor_a.cols() != r || f.factor_b.cols() != r || f.factor_c.cols() != r) {
    throw ShapeError("cp factor column counts do not match rank");
  }
  const Matrix x1 = f.factor_a * f.weights.asDiagonal() *
                    khatri_rao(f.factor_c, f.factor_b).transpose();
  return mode_n_fold(x1, 1, {f.factor_a.rows(), f.factor_b.rows(), f.factor_c.rows()});
}

}  // namespace cptr
