#include "cptr/experiment.hpp"

#include <algorithm>
#include <chrono>

namespace cptr::harness {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

}  // namespace

double median(std::vector<double> values) {
  if (values.empty()) throw DomainError("median of an empty list");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  if (n % 2 == 1) return values[n / 2];
  return 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

std::map<int, double> measure_latency(const lm::ModelParams& params,
                                      const lm::ModelConfig& config,
                                      const std::vector<int>& batch_sizes,
                                      int n_tokens, int n_repeats) {
  if (n_tokens < 1 || n_repeats < 1) {
    throw DomainError("latency measurement needs n_tokens and n_repeats >= 1");
  }
  const int prompt_len = std::min(8, config.max_seq_len - n_tokens);
  if (prompt_len < 1) throw ShapeError("n_tokens leaves no room for a prompt");

  lm::CptrState state;
  if (config.cptr_enabled) state = lm::CptrState::make(params, config);

  std::map<int, double> results;
  for (int bs : batch_sizes) {
    if (bs < 1) throw ShapeError("batch sizes must be >= 1");
    auto run_once = [&]() {
      Eigen::Matrix<std::int32_t, Eigen::Dynamic, Eigen::Dynamic> seq(bs, prompt_len);
      for (int b = 0; b < bs; ++b)
        for (int t = 0; t < prompt_len; ++t)
          seq(b, t) = static_cast<std::int32_t>((b + t) % config.vocab_size);
      const auto start = Clock::now();
      for (int step = 0; step < n_tokens; ++step) {
        lm::Batch batch;
        batch.token_ids = seq;
        batch.targets = decltype(seq)::Zero(seq.rows(), seq.cols());
        const Matrix logits = lm::forward(params, config, batch, &state);
        const Index t = seq.cols();
        seq.conservativeResize(Eigen::NoChange, t + 1);
        for (int b = 0; b < bs; ++b) {
          Index best = 0;
          double best_val = logits(b * t + (t - 1), 0);
          for (Index v = 1; v < config.vocab_size; ++v) {
            if (logits(b * t + (t - 1), v) > best_val) {
              best = v;
              best_val = logits(b * t + (t - 1), v);
            }
          }
          seq(b, t) = static_cast<std::int32_t>(best);
        }
      }
      return 1000.0 * seconds_since(start) /
             (static_cast<double>(n_tokens) * static_cast<double>(bs));
    };

    run_once();  // warmup
    std::vector<double> readings;
    readings.reserve(static_cast<std::size_t>(n_repeats));
    for (int r = 0; r < n_repeats; ++r) readings.push_back(run_once());
    results[bs] = median(std::move(readings));
  }
  return results;
}

TrainOutcome train_model(const lm::ModelConfig& model_config,
                         const std::vector<Batch>& batches, int steps, double lr) {
  if (steps > 0 && batches.empty()) throw ShapeError("training needs batches");
  TrainOutcome out;
  lm::Trainer trainer(model_config);
  const auto start = Clock::now();

  std::vector<Batch> consumed;
  for (int s = 0; s < steps; ++s) {
    const Batch& batch = batches[static_cast<std::size_t>(s) % batches.size()];
    consumed.push_back(batch);
    try {
      const double loss = trainer.step(batch, lr);
      if (s == 0) out.first_loss = loss;
      out.last_loss = loss;
    } catch (const std::runtime_error&) {
      out.failed = true;
      out.failed_step = s;
      break;
    }
  }
  out.wall_clock_seconds = seconds_since(start);
  out.params = trainer.params();
  out.steps = trainer.step_count();
  out.grad_norms = trainer.grad_norms();
  out.stream_hash = token_stream_hash(consumed);
  return out;
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
  lm::ModelConfig baseline_cfg = config.model;
  baseline_cfg.cptr_enabled = false;
  lm::ModelConfig cptr_cfg = config.model;
  cptr_cfg.cptr_enabled = true;
  baseline_cfg.validate();
  cptr_cfg.validate();

  RecallTaskSpec train_task = config.task;
  const RecallDataset train_set = gen_mixed_recall_dataset(train_task, config.distances);
  const std::vector<Batch> train_batches = train_set.to_batches(config.batch_size);

  RecallTaskSpec eval_task = config.task;
  eval_task.n_sequences = config.eval_sequences;
  eval_task.seed = config.task.seed + 0x9E3779B9ULL;  // held-out stream
  const RecallDataset eval_set = gen_mixed_recall_dataset(eval_task, config.distances);
  const std::vector<Batch> eval_batches = eval_set.to_batches(config.batch_size);

  auto run_one = [&](const lm::ModelConfig& model_cfg,
                     const std::string& label) -> MetricsReport {
    MetricsReport r;
    r.run_id = label + "-seed" + std::to_string(model_cfg.seed);
    r.config_fingerprint = config_fingerprint(model_cfg);
    r.seed = model_cfg.seed;

    TrainOutcome t = train_model(model_cfg, train_batches, config.train_steps,
                                 config.lr);
    r.stream_hash = hex64(t.stream_hash);
    r.failed = t.failed;
    r.failed_step = t.failed_step;
    r.wall_clock_seconds = t.wall_clock_seconds;
    if (t.steps > 0 && t.wall_clock_seconds > 0.0) {
      const double tokens = static_cast<double>(t.steps) *
                            static_cast<double>(config.batch_size) *
                            static_cast<double>(config.task.seq_len);
      r.tokens_per_second = tokens / t.wall_clock_seconds;
    }
    if (!t.grad_norms.empty()) r.grad_stats = lm::grad_stability_stats(t.grad_norms);
    if (t.failed) return r;

    r.perplexity = lm::perplexity(t.params, model_cfg, eval_batches);
    r.recall = evaluate_recall(t.params, model_cfg, eval_set);
    r.ms_per_token = measure_latency(t.params, model_cfg, config.latency_batch_sizes,
                                     config.latency_tokens, config.latency_repeats);
    return r;
  };

  ExperimentResult result;
  result.baseline = run_one(baseline_cfg, "baseline");
  result.cptr = run_one(cptr_cfg, "cptr");
  return result;
}

}  // namespace cptr::harness
