#pragma once

#include "cptr/config_io.hpp"
#include "cptr/recall.hpp"
#include "cptr/report.hpp"

#include <map>
#include <vector>

namespace cptr::harness {

// Median wall-clock milliseconds per generated token for each batch size,
// over n_repeats timed runs after one warmup.
std::map<int, double> measure_latency(const lm::ModelParams& params,
                                      const lm::ModelConfig& config,
                                      const std::vector<int>& batch_sizes,
                                      int n_tokens, int n_repeats);

double median(std::vector<double> values);

struct ExperimentResult {
  MetricsReport baseline;
  MetricsReport cptr;
};

// Trains a baseline and a CPTR model from the same seed on the same token
// stream, then evaluates perplexity, recall, latency and gradient stability.
ExperimentResult run_experiment(const ExperimentConfig& config);

// Single-model run used by the train/eval CLI paths.
struct TrainOutcome {
  lm::ModelParams params;
  long steps = 0;
  std::vector<double> grad_norms;
  double first_loss = 0.0;
  double last_loss = 0.0;
  double wall_clock_seconds = 0.0;
  std::uint64_t stream_hash = 0;
  bool failed = false;
  long failed_step = -1;
};

TrainOutcome train_model(const lm::ModelConfig& model_config,
                         const std::vector<Batch>& batches, int steps, double lr);

}  // namespace cptr::harness
