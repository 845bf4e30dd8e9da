#pragma once

#include "cptr/model.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace cptr::harness {

using lm::Batch;

/// Synthetic key->value recall task. Each sequence defines n_pairs pairs,
/// pads with filler, then queries one key; the model must emit its value.
/// Keys live in [1, vocab/2), values in [vocab/2, vocab), filler is 0.
struct RecallTaskSpec {
  int vocab_size = 64;
  int n_pairs = 4;
  int distance = 64;  // tokens from the queried key to the query position
  int seq_len = 128;
  int n_sequences = 256;
  std::uint64_t seed = 0;
};

struct RecallSequence {
  std::vector<std::int32_t> tokens;
  int distance = 0;
  int answer_pos = 0;  // index of the value token to be recalled
};

struct RecallDataset {
  int vocab_size = 0;
  int seq_len = 0;
  std::vector<RecallSequence> sequences;

  // LM batches with next-token targets, batch-major grouping.
  std::vector<Batch> to_batches(int batch_size) const;
};

RecallDataset gen_recall_dataset(const RecallTaskSpec& spec);

// Concatenation of per-distance datasets (round-robin), e.g. for training
// streams that mix the evaluation distances.
RecallDataset gen_mixed_recall_dataset(const RecallTaskSpec& base,
                                       const std::vector<int>& distances);

// Fraction of answer positions where greedy argmax matches the true value,
// grouped by definition-to-query distance. Empty buckets are absent.
std::map<int, double> evaluate_recall(const lm::ModelParams& params,
                                      const lm::ModelConfig& config,
                                      const RecallDataset& dataset);

void save_dataset(const std::string& path, const RecallDataset& dataset);
RecallDataset load_dataset(const std::string& path);

// FNV-1a over the little-endian token stream; ties the two runs of an
// experiment to the same data.
std::uint64_t token_stream_hash(const std::vector<Batch>& batches);

}  // namespace cptr::harness
