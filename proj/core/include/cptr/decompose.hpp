#pragma once

#include "cptr/tensor.hpp"

#include <array>
#include <cstdint>
#include <vector>

namespace cptr {

struct SvdThin {
  Matrix left;       // p x k, orthonormal columns
  Vector singulars;  // length k, nonincreasing, nonnegative
  Matrix right;      // q x k, orthonormal columns
};

// Thin SVD, k = min(p, q). Singular values sorted descending.
SvdThin svd_thin(const Matrix& m);

/// Tucker factorization: core (r1,r2,r3) plus per-mode factor matrices.
struct TuckerFactors {
  DenseTensor core;
  Matrix factor_u;  // d1 x r1
  Matrix factor_v;  // d2 x r2
  Matrix factor_z;  // d3 x r3

  const Matrix& factor(int mode) const {
    switch (mode) {
      case 1: return factor_u;
      case 2: return factor_v;
      default: return factor_z;
    }
  }
  std::array<Index, 3> ranks() const {
    return {core.dim(0), core.dim(1), core.dim(2)};
  }
};

/// CP factorization: weights plus unit-column factor matrices sharing rank r.
struct CPFactors {
  Vector weights;   // length r, column magnitudes
  Matrix factor_a;  // d1 x r
  Matrix factor_b;  // d2 x r
  Matrix factor_c;  // d3 x r

  Index rank() const { return weights.size(); }
};

// Truncated higher-order SVD. Factor k holds the leading r_k left singular
// vectors of the mode-k unfolding, sign-fixed so each column's
// largest-magnitude entry is nonnegative; core = t x1 U^T x2 V^T x3 Z^T.
TuckerFactors hosvd(const DenseTensor& t, const std::array<Index, 3>& ranks);

// Higher-order orthogonal iteration, initialized from hosvd. Stops after
// max_iters sweeps or when the reconstruction-error improvement drops below
// tol. Optionally records the per-sweep error trace (hosvd error first).
TuckerFactors hooi(const DenseTensor& t, const std::array<Index, 3>& ranks,
                   int max_iters, double tol,
                   std::vector<double>* error_trace = nullptr);

// CP via alternating least squares from a seeded uniform [-1,1] init.
// Singular normal equations are ridge-regularized (1e-12) rather than fatal.
// Optionally records the per-sweep objective ||t - reconstruction||_F.
CPFactors cp_als(const DenseTensor& t, Index rank, int max_iters, double tol,
                 std::uint64_t seed = 0,
                 std::vector<double>* objective_trace = nullptr);

DenseTensor tucker_reconstruct(const TuckerFactors& f);

DenseTensor cp_reconstruct(const CPFactors& f);

}  // namespace cptr
