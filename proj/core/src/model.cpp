#include "cptr/model.hpp"

#include <cmath>
#include <limits>
#include <random>
#include <stdexcept>

namespace cptr::lm {

namespace {

constexpr double kLnEps = 1e-10;
constexpr double kGeluC = 0.7978845608028654;  // sqrt(2/pi)
constexpr double kGeluA = 0.044715;

Matrix gelu(const Matrix& x) {
  const auto u = (kGeluC * (x.array() + kGeluA * x.array().cube())).tanh();
  return 0.5 * x.array() * (1.0 + u);
}

Matrix gelu_grad(const Matrix& x) {
  const auto xa = x.array();
  const Eigen::ArrayXXd th = (kGeluC * (xa + kGeluA * xa.cube())).tanh();
  const auto du = kGeluC * (1.0 + 3.0 * kGeluA * xa.square());
  return 0.5 * (1.0 + th) + 0.5 * xa * (1.0 - th.square()) * du;
}

DenseTensor w1_to_tensor(const Matrix& w1, const std::array<Index, 3>& shape) {
  DenseTensor t({shape[0], shape[1], shape[2]});
  const Index cols_per_split = shape[2];
  for (Index i = 0; i < shape[0]; ++i)
    for (Index a = 0; a < shape[1]; ++a)
      for (Index b = 0; b < cols_per_split; ++b)
        t.at3(i, a, b) = w1(i, a * cols_per_split + b);
  return t;
}

Matrix tensor_to_w1(const DenseTensor& t) {
  const Index d = t.dim(0), k = t.dim(1), c = t.dim(2);
  Matrix w1(d, k * c);
  for (Index i = 0; i < d; ++i)
    for (Index a = 0; a < k; ++a)
      for (Index b = 0; b < c; ++b) w1(i, a * c + b) = t.at3(i, a, b);
  return w1;
}

struct LnCache {
  Matrix xhat;  // normalized, pre-gain
  Vector rstd;  // per row
};

Matrix layernorm(const Matrix& x, const Vector& gain, const Vector& bias,
                 LnCache* cache) {
  const Index n = x.rows(), d = x.cols();
  Matrix out(n, d);
  if (cache) {
    cache->xhat.resize(n, d);
    cache->rstd.resize(n);
  }
  for (Index i = 0; i < n; ++i) {
    const double mu = x.row(i).mean();
    const double var = (x.row(i).array() - mu).square().mean();
    const double rstd = 1.0 / std::sqrt(var + kLnEps);
    for (Index j = 0; j < d; ++j) {
      const double xh = (x(i, j) - mu) * rstd;
      if (cache) cache->xhat(i, j) = xh;
      out(i, j) = gain[j] * xh + bias[j];
    }
    if (cache) cache->rstd[i] = rstd;
  }
  return out;
}

Matrix layernorm_backward(const Matrix& dout, const LnCache& cache, const Vector& gain,
                          Vector& dgain, Vector& dbias) {
  const Index n = dout.rows(), d = dout.cols();
  Matrix dx(n, d);
  for (Index i = 0; i < n; ++i) {
    dgain.noalias() += dout.row(i).cwiseProduct(cache.xhat.row(i)).transpose();
    dbias.noalias() += dout.row(i).transpose();
    const Eigen::RowVectorXd dxhat = dout.row(i).cwiseProduct(gain.transpose());
    const double m1 = dxhat.mean();
    const double m2 = dxhat.cwiseProduct(cache.xhat.row(i)).mean();
    dx.row(i) =
        cache.rstd[i] * (dxhat.array() - m1 - cache.xhat.row(i).array() * m2);
  }
  return dx;
}

void validate_batch(const ModelConfig& config, const Batch& batch) {
  if (batch.token_ids.rows() < 1 || batch.token_ids.cols() < 1) {
    throw ShapeError("batch must be nonempty");
  }
  if (batch.token_ids.cols() > config.max_seq_len) {
    throw ShapeError("sequence length exceeds max_seq_len");
  }
  if (batch.targets.rows() != batch.token_ids.rows() ||
      batch.targets.cols() != batch.token_ids.cols()) {
    throw ShapeError("targets shape must match token_ids");
  }
  auto in_range = [&](std::int32_t id) { return id >= 0 && id < config.vocab_size; };
  for (Index i = 0; i < batch.token_ids.rows(); ++i) {
    for (Index j = 0; j < batch.token_ids.cols(); ++j) {
      if (!in_range(batch.token_ids(i, j)) || !in_range(batch.targets(i, j))) {
        throw DomainError("token id out of vocabulary range");
      }
    }
  }
}

}  // namespace

struct BlockCache {
  LnCache ln1, ln2;
  Matrix x1;                 // post-LN1
  Matrix q, k, v;            // N x D
  std::vector<Matrix> probs; // B*H attention matrices, T x T
  Matrix ctx;                // N x D
  Matrix x2;                 // post-LN2
  Matrix w1eff;              // D x F
  Matrix h;                  // N x F, preactivation
  Matrix a;                  // N x F, activation
};

struct ForwardCache {
  Matrix x_final;  // N x D, pre-logits
  std::vector<BlockCache> blocks;
};

void ModelConfig::validate() const {
  if (vocab_size < 2) throw ShapeError("vocab_size must be >= 2");
  if (d_model < 1 || n_heads < 1 || n_layers < 1 || d_ff < 1 || max_seq_len < 1) {
    throw ShapeError("model dimensions must be positive");
  }
  if (d_model % n_heads != 0) throw ShapeError("d_model must divide by n_heads");
  if (ffn_split_k < 1 || d_ff % ffn_split_k != 0) {
    throw ShapeError("ffn_split_k must divide d_ff");
  }
  if (cptr_enabled) {
    const auto shape = weight_tensor_shape();
    for (int i = 0; i < 3; ++i) {
      if (cptr_ranks[static_cast<std::size_t>(i)] < 1 ||
          cptr_ranks[static_cast<std::size_t>(i)] > shape[static_cast<std::size_t>(i)]) {
        throw RankError("cptr ranks invalid for the reshaped FFN weight");
      }
    }
    if (cptr_refresh_interval < 1) throw ShapeError("refresh interval must be >= 1");
  }
}

ModelParams ModelParams::init(const ModelConfig& config) {
  config.validate();
  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> dist(0.0, 0.1);
  auto fill = [&](Matrix& m, Index rows, Index cols) {
    m.resize(rows, cols);
    for (Index i = 0; i < rows; ++i)
      for (Index j = 0; j < cols; ++j) m(i, j) = dist(rng);
  };

  ModelParams p;
  fill(p.tok_emb, config.vocab_size, config.d_model);
  fill(p.pos_emb, config.max_seq_len, config.d_model);
  p.blocks.resize(static_cast<std::size_t>(config.n_layers));
  for (auto& b : p.blocks) {
    fill(b.wq, config.d_model, config.d_model);
    fill(b.wk, config.d_model, config.d_model);
    fill(b.wv, config.d_model, config.d_model);
    fill(b.wo, config.d_model, config.d_model);
    b.ln1_gain = Vector::Ones(config.d_model);
    b.ln1_bias = Vector::Zero(config.d_model);
    b.ln2_gain = Vector::Ones(config.d_model);
    b.ln2_bias = Vector::Zero(config.d_model);
    fill(b.w1, config.d_model, config.d_ff);
    b.b1 = Vector::Zero(config.d_ff);
    fill(b.w2, config.d_ff, config.d_model);
    b.b2 = Vector::Zero(config.d_model);
    b.reconfig = init_identity_params(config.cptr_ranks);
  }
  return p;
}

ModelParams ModelParams::zeros_like(const ModelConfig& config) {
  ModelParams p;
  p.tok_emb = Matrix::Zero(config.vocab_size, config.d_model);
  p.pos_emb = Matrix::Zero(config.max_seq_len, config.d_model);
  p.blocks.resize(static_cast<std::size_t>(config.n_layers));
  for (auto& b : p.blocks) {
    b.wq = Matrix::Zero(config.d_model, config.d_model);
    b.wk = Matrix::Zero(config.d_model, config.d_model);
    b.wv = Matrix::Zero(config.d_model, config.d_model);
    b.wo = Matrix::Zero(config.d_model, config.d_model);
    b.ln1_gain = Vector::Zero(config.d_model);
    b.ln1_bias = Vector::Zero(config.d_model);
    b.ln2_gain = Vector::Zero(config.d_model);
    b.ln2_bias = Vector::Zero(config.d_model);
    b.w1 = Matrix::Zero(config.d_model, config.d_ff);
    b.b1 = Vector::Zero(config.d_ff);
    b.w2 = Matrix::Zero(config.d_ff, config.d_model);
    b.b2 = Vector::Zero(config.d_model);
    b.reconfig = init_identity_params(config.cptr_ranks);
  }
  return p;
}

void ModelParams::axpy(double scale, const ModelParams& other) {
  tok_emb -= scale * other.tok_emb;
  pos_emb -= scale * other.pos_emb;
  for (std::size_t l = 0; l < blocks.size(); ++l) {
    BlockParams& b = blocks[l];
    const BlockParams& g = other.blocks[l];
    b.wq -= scale * g.wq;
    b.wk -= scale * g.wk;
    b.wv -= scale * g.wv;
    b.wo -= scale * g.wo;
    b.ln1_gain -= scale * g.ln1_gain;
    b.ln1_bias -= scale * g.ln1_bias;
    b.ln2_gain -= scale * g.ln2_gain;
    b.ln2_bias -= scale * g.ln2_bias;
    b.w1 -= scale * g.w1;
    b.b1 -= scale * g.b1;
    b.w2 -= scale * g.w2;
    b.b2 -= scale * g.b2;
    for (Index i = 0; i < b.reconfig.core_gate.size(); ++i) {
      b.reconfig.core_gate[i] -= scale * g.reconfig.core_gate[i];
    }
    b.reconfig.residual_u -= scale * g.reconfig.residual_u;
    b.reconfig.residual_v -= scale * g.reconfig.residual_v;
    b.reconfig.residual_z -= scale * g.reconfig.residual_z;
  }
}

double ModelParams::global_norm() const {
  double s = tok_emb.squaredNorm() + pos_emb.squaredNorm();
  for (const auto& b : blocks) {
    s += b.wq.squaredNorm() + b.wk.squaredNorm() + b.wv.squaredNorm() +
         b.wo.squaredNorm();
    s += b.ln1_gain.squaredNorm() + b.ln1_bias.squaredNorm() +
         b.ln2_gain.squaredNorm() + b.ln2_bias.squaredNorm();
    s += b.w1.squaredNorm() + b.b1.squaredNorm() + b.w2.squaredNorm() +
         b.b2.squaredNorm();
    for (double v : b.reconfig.core_gate.values()) s += v * v;
    s += b.reconfig.residual_u.squaredNorm() + b.reconfig.residual_v.squaredNorm() +
         b.reconfig.residual_z.squaredNorm();
  }
  return std::sqrt(s);
}

bool ModelParams::all_finite() const {
  if (!tok_emb.allFinite() || !pos_emb.allFinite()) return false;
  for (const auto& b : blocks) {
    if (!b.wq.allFinite() || !b.wk.allFinite() || !b.wv.allFinite() ||
        !b.wo.allFinite() || !b.w1.allFinite() || !b.w2.allFinite()) {
      return false;
    }
  }
  return true;
}

CptrState CptrState::make(const ModelParams& params, const ModelConfig& config) {
  CptrState s;
  s.refresh(params, config);
  return s;
}

void CptrState::refresh(const ModelParams& params, const ModelConfig& config) {
  block_factors.clear();
  if (!config.cptr_enabled) return;
  const CptrConfig cc = config.cptr_config();
  const auto shape = config.weight_tensor_shape();
  block_factors.reserve(params.blocks.size());
  for (const auto& b : params.blocks) {
    block_factors.push_back(refresh_decomposition(w1_to_tensor(b.w1, shape), cc));
  }
}

Matrix forward(const ModelParams& params, const ModelConfig& config, const Batch& batch,
               const CptrState* state, ForwardCache* cache) {
  config.validate();
  validate_batch(config, batch);

  // Eval paths may not carry a cache; decompose on the fly.
  CptrState local_state;
  if (config.cptr_enabled && (state == nullptr || state->empty())) {
    local_state = CptrState::make(params, config);
    state = &local_state;
  }

  const Index B = batch.token_ids.rows(), T = batch.token_ids.cols();
  const Index D = config.d_model, H = config.n_heads, dh = D / H;
  const Index N = B * T;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  const auto w_shape = config.weight_tensor_shape();
  const CptrConfig cc = config.cptr_config();

  Matrix x(N, D);
  for (Index b = 0; b < B; ++b)
    for (Index t = 0; t < T; ++t)
      x.row(b * T + t) =
          params.tok_emb.row(batch.token_ids(b, t)) + params.pos_emb.row(t);

  if (cache) cache->blocks.resize(params.blocks.size());

  for (std::size_t l = 0; l < params.blocks.size(); ++l) {
    const BlockParams& blk = params.blocks[l];
    BlockCache scratch;
    BlockCache& bc = cache ? cache->blocks[l] : scratch;

    bc.x1 = layernorm(x, blk.ln1_gain, blk.ln1_bias, &bc.ln1);
    bc.q.noalias() = bc.x1 * blk.wq;
    bc.k.noalias() = bc.x1 * blk.wk;
    bc.v.noalias() = bc.x1 * blk.wv;

    bc.ctx.resize(N, D);
    bc.probs.assign(static_cast<std::size_t>(B * H), Matrix());
    for (Index b = 0; b < B; ++b) {
      for (Index h = 0; h < H; ++h) {
        auto qb = bc.q.block(b * T, h * dh, T, dh);
        auto kb = bc.k.block(b * T, h * dh, T, dh);
        auto vb = bc.v.block(b * T, h * dh, T, dh);
        Matrix scores = qb * kb.transpose() * inv_sqrt_dh;
        Matrix& p = bc.probs[static_cast<std::size_t>(b * H + h)];
        p = Matrix::Zero(T, T);
        for (Index i = 0; i < T; ++i) {
          // Causal: row i attends to positions 0..i only.
          const double mx = scores.row(i).head(i + 1).maxCoeff();
          p.row(i).head(i + 1) =
              (scores.row(i).head(i + 1).array() - mx).exp();
          p.row(i).head(i + 1) /= p.row(i).head(i + 1).sum();
        }
        bc.ctx.block(b * T, h * dh, T, dh).noalias() = p * vb;
      }
    }
    x.noalias() += bc.ctx * blk.wo;

    bc.x2 = layernorm(x, blk.ln2_gain, blk.ln2_bias, &bc.ln2);
    if (config.cptr_enabled) {
      const TuckerFactors& factors = state->block_factors[l];
      CptrResult r = cptr_apply(w1_to_tensor(blk.w1, w_shape), cc, blk.reconfig,
                                &factors);
      bc.w1eff = tensor_to_w1(r.w_prime);
    } else {
      bc.w1eff = blk.w1;
    }
    bc.h.noalias() = bc.x2 * bc.w1eff;
    bc.h.rowwise() += blk.b1.transpose();
    bc.a = gelu(bc.h);
    Matrix y = bc.a * blk.w2;
    y.rowwise() += blk.b2.transpose();
    x += y;
  }

  if (cache) cache->x_final = x;
  return x * params.tok_emb.transpose();
}

LossAndGrads loss_and_grads(const ModelParams& params, const ModelConfig& config,
                            const Batch& batch, const CptrState* state) {
  CptrState local_state;
  if (config.cptr_enabled && (state == nullptr || state->empty())) {
    local_state = CptrState::make(params, config);
    state = &local_state;
  }

  ForwardCache cache;
  const Matrix logits = forward(params, config, batch, state, &cache);

  const Index B = batch.token_ids.rows(), T = batch.token_ids.cols();
  const Index D = config.d_model, H = config.n_heads, dh = D / H;
  const Index N = B * T;
  const double inv_sqrt_dh = 1.0 / std::sqrt(static_cast<double>(dh));
  const auto w_shape = config.weight_tensor_shape();
  const CptrConfig cc = config.cptr_config();

  LossAndGrads out;
  out.grads = ModelParams::zeros_like(config);

  // Cross-entropy and its logit gradient, mean over all positions.
  Matrix dlogits(N, config.vocab_size);
  double loss = 0.0;
  for (Index b = 0; b < B; ++b) {
    for (Index t = 0; t < T; ++t) {
      const Index n = b * T + t;
      const Index y = batch.targets(b, t);
      const double mx = logits.row(n).maxCoeff();
      dlogits.row(n) = (logits.row(n).array() - mx).exp();
      const double denom = dlogits.row(n).sum();
      loss += mx + std::log(denom) - logits(n, y);
      dlogits.row(n) /= denom;
      dlogits(n, y) -= 1.0;
    }
  }
  const double scale = 1.0 / static_cast<double>(N);
  loss *= scale;
  dlogits *= scale;
  out.loss = loss;

  // Tied output projection.
  Matrix dx = dlogits * params.tok_emb;
  out.grads.tok_emb.noalias() += dlogits.transpose() * cache.x_final;

  for (std::size_t li = params.blocks.size(); li-- > 0;) {
    const BlockParams& blk = params.blocks[li];
    BlockParams& g = out.grads.blocks[li];
    const BlockCache& bc = cache.blocks[li];

    // FFN path.
    const Matrix& dy = dx;  // residual: dx flows both through and around
    Matrix da = dy * blk.w2.transpose();
    g.w2.noalias() += bc.a.transpose() * dy;
    g.b2.noalias() += dy.colwise().sum().transpose();
    Matrix dh_pre = da.cwiseProduct(gelu_grad(bc.h));
    g.b1.noalias() += dh_pre.colwise().sum().transpose();
    Matrix dw1eff = bc.x2.transpose() * dh_pre;
    Matrix dx2 = dh_pre * bc.w1eff.transpose();
    if (config.cptr_enabled) {
      // Decomposition held constant: gradient lands on the reconfiguration
      // parameters, none on w1 itself.
      ReconfigParams pg = cptr_param_gradients(
          w1_to_tensor(blk.w1, w_shape), cc, blk.reconfig,
          w1_to_tensor(dw1eff, w_shape), &state->block_factors[li]);
      g.reconfig.core_gate += pg.core_gate;
      g.reconfig.residual_u += pg.residual_u;
      g.reconfig.residual_v += pg.residual_v;
      g.reconfig.residual_z += pg.residual_z;
    } else {
      g.w1 += dw1eff;
    }
    dx += layernorm_backward(dx2, bc.ln2, blk.ln2_gain, g.ln2_gain, g.ln2_bias);

    // Attention path.
    const Matrix& dattn_out = dx;
    Matrix dctx = dattn_out * blk.wo.transpose();
    g.wo.noalias() += bc.ctx.transpose() * dattn_out;

    Matrix dq = Matrix::Zero(N, D), dk = Matrix::Zero(N, D), dv = Matrix::Zero(N, D);
    for (Index b = 0; b < B; ++b) {
      for (Index h = 0; h < H; ++h) {
        const Matrix& p = bc.probs[static_cast<std::size_t>(b * H + h)];
        auto qb = bc.q.block(b * T, h * dh, T, dh);
        auto kb = bc.k.block(b * T, h * dh, T, dh);
        auto vb = bc.v.block(b * T, h * dh, T, dh);
        auto dctxb = dctx.block(b * T, h * dh, T, dh);
        Matrix dp = dctxb * vb.transpose();
        dv.block(b * T, h * dh, T, dh).noalias() += p.transpose() * dctxb;
        Matrix ds = Matrix::Zero(T, T);
        for (Index i = 0; i < T; ++i) {
          double dot = 0.0;
          for (Index j = 0; j <= i; ++j) dot += dp(i, j) * p(i, j);
          for (Index j = 0; j <= i; ++j) ds(i, j) = p(i, j) * (dp(i, j) - dot);
        }
        dq.block(b * T, h * dh, T, dh).noalias() += ds * kb * inv_sqrt_dh;
        dk.block(b * T, h * dh, T, dh).noalias() +=
            ds.transpose() * qb * inv_sqrt_dh;
      }
    }
    Matrix dx1 = dq * blk.wq.transpose() + dk * blk.wk.transpose() +
                 dv * blk.wv.transpose();
    g.wq.noalias() += bc.x1.transpose() * dq;
    g.wk.noalias() += bc.x1.transpose() * dk;
    g.wv.noalias() += bc.x1.transpose() * dv;
    dx += layernorm_backward(dx1, bc.ln1, blk.ln1_gain, g.ln1_gain, g.ln1_bias);
  }

  // Embedding lookups.
  for (Index b = 0; b < B; ++b) {
    for (Index t = 0; t < T; ++t) {
      out.grads.tok_emb.row(batch.token_ids(b, t)) += dx.row(b * T + t);
      out.grads.pos_emb.row(t) += dx.row(b * T + t);
    }
  }
  return out;
}

double train_step(ModelParams& params, const ModelConfig& config, const Batch& batch,
                  double lr, const CptrState* state) {
  if (lr < 0.0) throw DomainError("learning rate must be nonnegative");
  LossAndGrads lg = loss_and_grads(params, config, batch, state);
  if (!std::isfinite(lg.loss)) {
    throw std::runtime_error("training diverged: non-finite loss");
  }
  params.axpy(lr, lg.grads);
  return lg.loss;
}

double perplexity(const ModelParams& params, const ModelConfig& config,
                  const std::vector<Batch>& dataset) {
  if (dataset.empty()) throw DomainError("perplexity requires a nonempty dataset");
  CptrState state;
  if (config.cptr_enabled) state = CptrState::make(params, config);

  double nll = 0.0;
  long count = 0;
  for (const Batch& batch : dataset) {
    const Matrix logits = forward(params, config, batch, &state);
    const Index B = batch.token_ids.rows(), T = batch.token_ids.cols();
    for (Index b = 0; b < B; ++b) {
      for (Index t = 0; t < T; ++t) {
        const Index n = b * T + t;
        const double mx = logits.row(n).maxCoeff();
        const double denom = (logits.row(n).array() - mx).exp().sum();
        nll += mx + std::log(denom) - logits(n, batch.targets(b, t));
        ++count;
      }
    }
  }
  return std::exp(nll / static_cast<double>(count));
}

std::vector<std::int32_t> generate(const ModelParams& params,
                                   const ModelConfig& config,
                                   const std::vector<std::int32_t>& prompt,
                                   int n_tokens) {
  if (n_tokens < 0) throw DomainError("n_tokens must be nonnegative");
  if (prompt.empty() && n_tokens > 0) {
    throw ShapeError("generation requires a nonempty prompt");
  }
  if (static_cast<int>(prompt.size()) + n_tokens > config.max_seq_len) {
    throw ShapeError("prompt length + n_tokens exceeds max_seq_len");
  }
  std::vector<std::int32_t> seq = prompt;
  if (n_tokens == 0) return seq;

  CptrState state;
  if (config.cptr_enabled) state = CptrState::make(params, config);

  for (int step = 0; step < n_tokens; ++step) {
    const Index t = static_cast<Index>(seq.size());
    Batch batch;
    batch.token_ids.resize(1, t);
    batch.targets = Eigen::Matrix<std::int32_t, Eigen::Dynamic, Eigen::Dynamic>::Zero(1, t);
    for (Index i = 0; i < t; ++i) batch.token_ids(0, i) = seq[static_cast<std::size_t>(i)];
    const Matrix logits = forward(params, config, batch, &state);
    // Argmax with ties broken by the lowest token id.
    Index best = 0;
    double best_val = logits(t - 1, 0);
    for (Index v = 1; v < config.vocab_size; ++v) {
      if (logits(t - 1, v) > best_val) {
        best = v;
        best_val = logits(t - 1, v);
      }
    }
    seq.push_back(static_cast<std::int32_t>(best));
  }
  return seq;
}

GradStats grad_stability_stats(const std::vector<double>& grad_norm_series) {
  if (grad_norm_series.empty()) {
    throw DomainError("grad_stability_stats requires a nonempty series");
  }
  GradStats s;
  double sum = 0.0, mx = grad_norm_series.front();
  for (double v : grad_norm_series) {
    sum += v;
    mx = std::max(mx, v);
  }
  s.mean = sum / static_cast<double>(grad_norm_series.size());
  double var = 0.0;
  for (double v : grad_norm_series) var += (v - s.mean) * (v - s.mean);
  s.variance = var / static_cast<double>(grad_norm_series.size());
  s.max_over_mean = s.mean != 0.0 ? mx / s.mean : 0.0;
  return s;
}

ActivationStats forward_activation_stats(const ModelParams& params,
                                         const ModelConfig& config,
                                         const Batch& batch) {
  ForwardCache cache;
  forward(params, config, batch, nullptr, &cache);

  ActivationStats s;
  const Index B = batch.token_ids.rows(), T = batch.token_ids.cols();
  const Index H = config.n_heads;
  for (const BlockCache& bc : cache.blocks) {
    for (Index bh = 0; bh < B * H; ++bh) {
      const Matrix& p = bc.probs[static_cast<std::size_t>(bh)];
      for (Index i = 0; i < T; ++i) {
        s.max_softmax_row_err =
            std::max(s.max_softmax_row_err, std::abs(p.row(i).sum() - 1.0));
      }
    }
    for (const LnCache* ln : {&bc.ln1, &bc.ln2}) {
      for (Index i = 0; i < ln->xhat.rows(); ++i) {
        const double mu = ln->xhat.row(i).mean();
        const double var = (ln->xhat.row(i).array() - mu).square().mean();
        s.max_ln_mean = std::max(s.max_ln_mean, std::abs(mu));
        s.max_ln_var_err = std::max(s.max_ln_var_err, std::abs(var - 1.0));
      }
    }
  }
  return s;
}

Trainer::Trainer(ModelConfig config, ModelParams params)
    : config_(std::move(config)), params_(std::move(params)) {
  config_.validate();
}

double Trainer::step(const Batch& batch, double lr) {
  if (config_.cptr_enabled &&
      (step_count_ % config_.cptr_refresh_interval == 0 || state_.empty())) {
    state_.refresh(params_, config_);
  }
  LossAndGrads lg = loss_and_grads(params_, config_, batch,
                                   config_.cptr_enabled ? &state_ : nullptr);
  if (!std::isfinite(lg.loss)) {
    throw std::runtime_error("training diverged: non-finite loss at step " +
                             std::to_string(step_count_));
  }
  grad_norms_.push_back(lg.grads.global_norm());
  params_.axpy(lr, lg.grads);
  ++step_count_;
  return lg.loss;
}

}  // namespace cptr::lm
