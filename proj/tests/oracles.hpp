// Test-side reference implementations. Everything here is deliberately naive
// (index loops, explicit sums, hand-rolled Jacobi eigenvalues) so that it is
// independent of the library code paths it checks.
#pragma once

#include "cptr/decompose.hpp"
#include "cptr/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

namespace oracle {

using cptr::DenseTensor;
using cptr::Index;
using cptr::Matrix;
using cptr::Vector;

inline DenseTensor random_tensor3(Index d1, Index d2, Index d3, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  DenseTensor t({d1, d2, d3});
  for (Index i = 0; i < t.size(); ++i) t[i] = dist(rng);
  return t;
}

inline Matrix random_matrix(Index rows, Index cols, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> dist(-1.0, 1.0);
  Matrix m(rows, cols);
  for (Index i = 0; i < rows; ++i)
    for (Index j = 0; j < cols; ++j) m(i, j) = dist(rng);
  return m;
}

// Mode-n unfolding straight from the index formula:
// row = i_n, column = sum over the remaining indices (earliest fastest).
inline Matrix unfold3(const DenseTensor& t, int n) {
  const Index d1 = t.dim(0), d2 = t.dim(1), d3 = t.dim(2);
  Index rows = 0, cols = 0;
  if (n == 1) { rows = d1; cols = d2 * d3; }
  if (n == 2) { rows = d2; cols = d1 * d3; }
  if (n == 3) { rows = d3; cols = d1 * d2; }
  Matrix m(rows, cols);
  for (Index i1 = 0; i1 < d1; ++i1) {
    for (Index i2 = 0; i2 < d2; ++i2) {
      for (Index i3 = 0; i3 < d3; ++i3) {
        const double v = t.at3(i1, i2, i3);
        if (n == 1) m(i1, i2 + i3 * d2) = v;
        if (n == 2) m(i2, i1 + i3 * d1) = v;
        if (n == 3) m(i3, i1 + i2 * d1) = v;
      }
    }
  }
  return m;
}

// Tensor-times-matrix along one mode, computed entry by entry.
inline DenseTensor mode_product3(const DenseTensor& t, const Matrix& m, int n) {
  const Index d1 = t.dim(0), d2 = t.dim(1), d3 = t.dim(2);
  std::vector<Index> shape = {d1, d2, d3};
  shape[static_cast<std::size_t>(n - 1)] = m.rows();
  DenseTensor out(shape);
  for (Index i1 = 0; i1 < out.dim(0); ++i1) {
    for (Index i2 = 0; i2 < out.dim(1); ++i2) {
      for (Index i3 = 0; i3 < out.dim(2); ++i3) {
        double s = 0.0;
        if (n == 1) {
          for (Index k = 0; k < d1; ++k) s += m(i1, k) * t.at3(k, i2, i3);
        } else if (n == 2) {
          for (Index k = 0; k < d2; ++k) s += m(i2, k) * t.at3(i1, k, i3);
        } else {
          for (Index k = 0; k < d3; ++k) s += m(i3, k) * t.at3(i1, i2, k);
        }
        out.at3(i1, i2, i3) = s;
      }
    }
  }
  return out;
}

// Tucker reconstruction as the quadruple sum over the core indices.
inline DenseTensor tucker_reconstruct_sum(const cptr::TuckerFactors& f) {
  const Index d1 = f.factor_u.rows(), d2 = f.factor_v.rows(), d3 = f.factor_z.rows();
  const auto r = f.ranks();
  DenseTensor out({d1, d2, d3});
  for (Index i = 0; i < d1; ++i) {
    for (Index j = 0; j < d2; ++j) {
      for (Index k = 0; k < d3; ++k) {
        double s = 0.0;
        for (Index a = 0; a < r[0]; ++a)
          for (Index b = 0; b < r[1]; ++b)
            for (Index c = 0; c < r[2]; ++c)
              s += f.core.at3(a, b, c) * f.factor_u(i, a) * f.factor_v(j, b) *
                   f.factor_z(k, c);
        out.at3(i, j, k) = s;
      }
    }
  }
  return out;
}

// CP reconstruction as the rank sum of outer products.
inline DenseTensor cp_reconstruct_sum(const cptr::CPFactors& f) {
  const Index d1 = f.factor_a.rows(), d2 = f.factor_b.rows(), d3 = f.factor_c.rows();
  DenseTensor out({d1, d2, d3});
  for (Index i = 0; i < d1; ++i)
    for (Index j = 0; j < d2; ++j)
      for (Index k = 0; k < d3; ++k) {
        double s = 0.0;
        for (Index r = 0; r < f.rank(); ++r)
          s += f.weights[r] * f.factor_a(i, r) * f.factor_b(j, r) * f.factor_c(k, r);
        out.at3(i, j, k) = s;
      }
  return out;
}

// Eigenvalues of a symmetric matrix by cyclic Jacobi rotations. Used to
// cross-check singular values: sigma_i = sqrt(eig_i(M^T M)).
inline std::vector<double> symmetric_eigenvalues(Matrix a) {
  const Index n = a.rows();
  for (int sweep = 0; sweep < 100; ++sweep) {
    double off = 0.0;
    for (Index p = 0; p < n; ++p)
      for (Index q = p + 1; q < n; ++q) off += a(p, q) * a(p, q);
    if (off < 1e-26) break;
    for (Index p = 0; p < n; ++p) {
      for (Index q = p + 1; q < n; ++q) {
        if (std::abs(a(p, q)) < 1e-300) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * a(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
        for (Index k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (Index k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
      }
    }
  }
  std::vector<double> eig(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) eig[static_cast<std::size_t>(i)] = a(i, i);
  std::sort(eig.rbegin(), eig.rend());
  return eig;
}

inline std::vector<double> gram_singular_values(const Matrix& m) {
  const Matrix gram = m.cols() <= m.rows() ? Matrix(m.transpose() * m)
                                           : Matrix(m * m.transpose());
  std::vector<double> eig = symmetric_eigenvalues(gram);
  for (double& e : eig) e = std::sqrt(std::max(e, 0.0));
  return eig;
}

inline double frobenius_sum(const DenseTensor& t) {
  double s = 0.0;
  for (Index i = 0; i < t.size(); ++i) s += t[i] * t[i];
  return std::sqrt(s);
}

// Two-pass mean/variance, the reference for gradient-stability stats.
struct TwoPassStats {
  double mean = 0.0, variance = 0.0, max = 0.0;
};

inline TwoPassStats two_pass_stats(const std::vector<double>& xs) {
  TwoPassStats s;
  for (double x : xs) {
    s.mean += x;
    s.max = std::max(s.max, x);
  }
  s.mean /= static_cast<double>(xs.size());
  for (double x : xs) s.variance += (x - s.mean) * (x - s.mean);
  s.variance /= static_cast<double>(xs.size());
  return s;
}

inline double rel_diff(double a, double b, double floor = 1e-6) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), floor});
}

}  // namespace oracle
