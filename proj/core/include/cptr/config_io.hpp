#pragma once

#include "cptr/model.hpp"
#include "cptr/recall.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace cptr::harness {

std::uint64_t fnv1a64(const void* data, std::size_t n,
                      std::uint64_t h = 14695981039346656037ULL);
std::string hex64(std::uint64_t v);

struct ConfigError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

/// Everything one experiment run needs: the model shape, the task and the
/// training/benchmark knobs. Parsed from a `key = value` text file.
struct ExperimentConfig {
  lm::ModelConfig model;
  RecallTaskSpec task;
  std::vector<int> distances = {64, 112};
  int train_steps = 500;
  int batch_size = 16;
  double lr = 1e-3;
  int eval_sequences = 128;
  std::vector<int> latency_batch_sizes = {1, 16};
  int latency_tokens = 16;
  int latency_repeats = 5;
};

ExperimentConfig parse_config_text(const std::string& text);
ExperimentConfig load_config_file(const std::string& path);

// Canonical key=value rendering; fixed key order, parse/serialize roundtrip.
std::string serialize_config(const ExperimentConfig& config);

// Stable fingerprint of the model configuration (hex FNV-1a of its
// canonical rendering).
std::string config_fingerprint(const lm::ModelConfig& config);

}  // namespace cptr::harness
