#include "cptr/reconfig.hpp"

namespace cptr {

namespace {

void check_param_shapes(const TuckerFactors& factors, const ReconfigParams& params) {
  const auto ranks = factors.ranks();
  if (params.core_gate.order() != 3 || params.core_gate.dim(0) != ranks[0] ||
      params.core_gate.dim(1) != ranks[1] || params.core_gate.dim(2) != ranks[2]) {
    throw ShapeError("core_gate shape does not match configured ranks");
  }
  auto square = [](const Matrix& m, Index r) { return m.rows() == r && m.cols() == r; };
  if (!square(params.residual_u, ranks[0]) || !square(params.residual_v, ranks[1]) ||
      !square(params.residual_z, ranks[2])) {
    throw ShapeError("residual matrix shape does not match configured ranks");
  }
}

TuckerFactors decompose_for(const DenseTensor& w, const CptrConfig& config,
                            const TuckerFactors* cache) {
  if (cache) return *cache;
  return refresh_decomposition(w, config);
}

}  // namespace

ReconfigParams init_identity_params(const std::array<Index, 3>& ranks) {
  for (Index r : ranks) {
    if (r < 1) throw RankError("ranks must be >= 1");
  }
  ReconfigParams p;
  p.core_gate = DenseTensor({ranks[0], ranks[1], ranks[2]});
  p.residual_u = Matrix::Zero(ranks[0], ranks[0]);
  p.residual_v = Matrix::Zero(ranks[1], ranks[1]);
  p.residual_z = Matrix::Zero(ranks[2], ranks[2]);
  return p;
}

TuckerFactors reconfigure(const TuckerFactors& factors, const ReconfigParams& params) {
  check_param_shapes(factors, params);
  TuckerFactors out = factors;
  for (Index i = 0; i < out.core.size(); ++i) {
    out.core[i] = factors.core[i] * (1.0 + params.core_gate[i]);
  }
  const auto ranks = factors.ranks();
  out.factor_u = factors.factor_u *
                 (Matrix::Identity(ranks[0], ranks[0]) + params.residual_u);
  out.factor_v = factors.factor_v *
                 (Matrix::Identity(ranks[1], ranks[1]) + params.residual_v);
  out.factor_z = factors.factor_z *
                 (Matrix::Identity(ranks[2], ranks[2]) + params.residual_z);
  return out;
}

TuckerFactors refresh_decomposition(const DenseTensor& w, const CptrConfig& config) {
  if (config.decomposition == DecompositionMethod::hooi) {
    return hooi(w, config.ranks, config.hooi_max_iters, config.hooi_tol);
  }
  return hosvd(w, config.ranks);
}

CptrResult cptr_apply(const DenseTensor& w, const CptrConfig& config,
                      const ReconfigParams& params, const TuckerFactors* cache) {
  TuckerFactors base = decompose_for(w, config, cache);
  TuckerFactors reconfigured = reconfigure(base, params);
  DenseTensor w_prime = tucker_reconstruct(reconfigured);
  return CptrResult{std::move(w_prime), std::move(base)};
}

ReconfigParams cptr_param_gradients(const DenseTensor& w, const CptrConfig& config,
                                    const ReconfigParams& params,
                                    const DenseTensor& upstream,
                                    const TuckerFactors* cache) {
  if (!upstream.same_shape(w)) {
    throw ShapeError("upstream gradient shape must match the weight tensor");
  }
  const TuckerFactors base = decompose_for(w, config, cache);
  const TuckerFactors rec = reconfigure(base, params);
  const auto ranks = base.ranks();

  ReconfigParams grads = init_identity_params(ranks);

  // d<S, W'>/dG' = S x1 U'^T x2 V'^T x3 Z'^T; gate gradient scales by G.
  DenseTensor core_grad = mode_n_product(upstream, rec.factor_u.transpose(), 1);
  core_grad = mode_n_product(core_grad, rec.factor_v.transpose(), 2);
  core_grad = mode_n_product(core_grad, rec.factor_z.transpose(), 3);
  for (Index i = 0; i < core_grad.size(); ++i) {
    grads.core_gate[i] = base.core[i] * core_grad[i];
  }

  // For each mode n: dL/dF'_n = S_(n) * (G' x_{m != n} F'_m)_(n)^T,
  // then chain through F'_n = F_n (I + R_n).
  auto factor_grad = [&](int n) -> Matrix {
    DenseTensor m = rec.core;
    for (int k = 1; k <= 3; ++k) {
      if (k == n) continue;
      m = mode_n_product(m, rec.factor(k), k);
    }
    const Matrix d_fprime = mode_n_unfold(upstream, n) * mode_n_unfold(m, n).transpose();
    return base.factor(n).transpose() * d_fprime;
  };
  grads.residual_u = factor_grad(1);
  grads.residual_v = factor_grad(2);
  grads.residual_z = factor_grad(3);
  return grads;
}

}  // namespace cptr
