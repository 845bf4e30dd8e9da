#pragma once

#include "cptr/reconfig.hpp"

#include <array>
#include <cstdint>
#include <optional>
#include <vector>

namespace cptr::lm {

using cptr::Index;
using cptr::Matrix;
using cptr::Vector;

struct ModelConfig {
  int vocab_size = 64;
  int d_model = 64;
  int n_heads = 2;
  int n_layers = 2;
  int d_ff = 128;
  int max_seq_len = 128;
  bool cptr_enabled = false;
  std::array<Index, 3> cptr_ranks = {32, 2, 16};
  int cptr_refresh_interval = 10;
  int ffn_split_k = 4;  // reshape factor for the first FFN weight
  std::uint64_t seed = 0;

  void validate() const;

  // Shape of the FFN first weight viewed as an order-3 tensor.
  std::array<Index, 3> weight_tensor_shape() const {
    return {d_model, ffn_split_k, d_ff / ffn_split_k};
  }
  CptrConfig cptr_config() const {
    CptrConfig c;
    c.ranks = cptr_ranks;
    c.refresh_interval = cptr_refresh_interval;
    return c;
  }
};

struct BlockParams {
  Matrix wq, wk, wv, wo;  // d_model x d_model
  Vector ln1_gain, ln1_bias, ln2_gain, ln2_bias;
  Matrix w1;  // d_model x d_ff
  Vector b1;
  Matrix w2;  // d_ff x d_model
  Vector b2;
  ReconfigParams reconfig;  // present even when cptr is off (zero-sized use)
};

struct ModelParams {
  Matrix tok_emb;  // vocab_size x d_model; also the tied output projection
  Matrix pos_emb;  // max_seq_len x d_model
  std::vector<BlockParams> blocks;

  static ModelParams init(const ModelConfig& config);
  static ModelParams zeros_like(const ModelConfig& config);

  // In-place params -= scale * other (used for the SGD update).
  void axpy(double scale, const ModelParams& other);
  double global_norm() const;
  bool all_finite() const;
};

struct Batch {
  Eigen::Matrix<std::int32_t, Eigen::Dynamic, Eigen::Dynamic> token_ids;  // B x T
  Eigen::Matrix<std::int32_t, Eigen::Dynamic, Eigen::Dynamic> targets;    // B x T
};

// Per-block Tucker caches for the CPTR layer; owned by the training loop.
struct CptrState {
  std::vector<TuckerFactors> block_factors;

  static CptrState make(const ModelParams& params, const ModelConfig& config);
  void refresh(const ModelParams& params, const ModelConfig& config);
  bool empty() const { return block_factors.empty(); }
};

struct ForwardCache;  // defined in model.cpp

// Logits as a (B*T) x vocab_size matrix, rows ordered batch-major.
Matrix forward(const ModelParams& params, const ModelConfig& config, const Batch& batch,
               const CptrState* state = nullptr, ForwardCache* cache = nullptr);

struct LossAndGrads {
  double loss = 0.0;
  ModelParams grads;
};

// Mean token cross-entropy and exact reverse-mode gradients for every
// parameter. Under CPTR the decomposition cache is held constant, so the
// gradient flows into ReconfigParams and w1 receives none from the FFN path.
LossAndGrads loss_and_grads(const ModelParams& params, const ModelConfig& config,
                            const Batch& batch, const CptrState* state = nullptr);

// One plain SGD step; returns the loss at the pre-update parameters.
// Throws on non-finite loss.
double train_step(ModelParams& params, const ModelConfig& config, const Batch& batch,
                  double lr, const CptrState* state = nullptr);

double perplexity(const ModelParams& params, const ModelConfig& config,
                  const std::vector<Batch>& dataset);

// Greedy argmax decoding; ties broken by the lowest token id.
std::vector<std::int32_t> generate(const ModelParams& params, const ModelConfig& config,
                                   const std::vector<std::int32_t>& prompt,
                                   int n_tokens);

struct GradStats {
  double mean = 0.0;
  double variance = 0.0;
  double max_over_mean = 0.0;
};

GradStats grad_stability_stats(const std::vector<double>& grad_norm_series);

/// Numerical health of one forward pass: worst attention-row mass deviation
/// from 1, worst layer-norm per-position mean, and worst deviation of the
/// pre-gain layer-norm variance from 1.
struct ActivationStats {
  double max_softmax_row_err = 0.0;
  double max_ln_mean = 0.0;
  double max_ln_var_err = 0.0;
};

ActivationStats forward_activation_stats(const ModelParams& params,
                                         const ModelConfig& config,
                                         const Batch& batch);

/// Owns parameters, step counter, CPTR cache and the gradient-norm series.
class Trainer {
 public:
  Trainer(ModelConfig config, ModelParams params);
  explicit Trainer(const ModelConfig& config)
      : Trainer(config, ModelParams::init(config)) {}

  double step(const Batch& batch, double lr);

  const ModelParams& params() const { return params_; }
  ModelParams& params() { return params_; }
  const ModelConfig& config() const { return config_; }
  long step_count() const { return step_count_; }
  void set_step_count(long n) { step_count_ = n; }
  const std::vector<double>& grad_norms() const { return grad_norms_; }
  const CptrState* cptr_state() const {
    return config_.cptr_enabled ? &state_ : nullptr;
  }

 private:
  ModelConfig config_;
  ModelParams params_;
  CptrState state_;
  long step_count_ = 0;
  std::vector<double> grad_norms_;
};

}  // namespace cptr::lm
