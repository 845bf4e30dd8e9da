#pragma once

#include "cptr/decompose.hpp"

#include <array>
#include <optional>

namespace cptr {

/// Learnable parameters of the reconfiguration step. Zero init makes both
/// the core gate and the factor residual maps exact identities.
struct ReconfigParams {
  DenseTensor core_gate;  // (r1,r2,r3), elementwise gate on the core
  Matrix residual_u;      // r1 x r1
  Matrix residual_v;      // r2 x r2
  Matrix residual_z;      // r3 x r3
};

enum class DecompositionMethod { hosvd, hooi };

struct CptrConfig {
  std::array<Index, 3> ranks{};
  int refresh_interval = 10;  // training steps between re-decompositions
  DecompositionMethod decomposition = DecompositionMethod::hosvd;
  int hooi_max_iters = 5;
  double hooi_tol = 1e-10;
};

ReconfigParams init_identity_params(const std::array<Index, 3>& ranks);

// Core gate G' = G .* (1 + core_gate); factor residuals F' = F (I + residual).
TuckerFactors reconfigure(const TuckerFactors& factors, const ReconfigParams& params);

// Deterministic decomposition of w by the configured method (sign-fixed
// factor columns), for use as cache until the next refresh.
TuckerFactors refresh_decomposition(const DenseTensor& w, const CptrConfig& config);

struct CptrResult {
  DenseTensor w_prime;
  TuckerFactors factors_used;  // base decomposition (pre-reconfiguration)
};

// Decompose (or reuse cache), reconfigure, contract back to w's shape.
CptrResult cptr_apply(const DenseTensor& w, const CptrConfig& config,
                      const ReconfigParams& params,
                      const TuckerFactors* cache = nullptr);

// Exact reverse-mode gradients of <upstream, W'> w.r.t. the reconfiguration
// parameters. The decomposition is treated as a constant.
ReconfigParams cptr_param_gradients(const DenseTensor& w, const CptrConfig& config,
                                    const ReconfigParams& params,
                                    const DenseTensor& upstream,
                                    const TuckerFactors* cache = nullptr);

}  // namespace cptr
