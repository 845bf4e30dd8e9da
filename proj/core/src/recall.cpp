#include "cptr/recall.hpp"

#include "cptr/config_io.hpp"

#include <algorithm>
#include <cstring>
#include <fstream>
#include <random>

namespace cptr::harness {

namespace {

void validate_spec(const RecallTaskSpec& spec) {
  if (spec.vocab_size < 6) throw ShapeError("recall task needs vocab_size >= 6");
  if (spec.n_pairs < 1) throw ShapeError("n_pairs must be >= 1");
  if (spec.n_sequences < 1) throw ShapeError("n_sequences must be >= 1");
  const int n_keys = spec.vocab_size / 2 - 1;
  if (spec.n_pairs > n_keys) {
    throw ShapeError("n_pairs exceeds the key alphabet size");
  }
  const int query_pos = spec.seq_len - 2;
  if (spec.distance < 2 || query_pos - spec.distance < 0) {
    throw ShapeError("recall task layout infeasible: bad distance");
  }
  // Pair section + filler + query/answer must fit.
  if (2 * spec.n_pairs + 2 > spec.seq_len) {
    throw ShapeError("recall task layout infeasible: sequence too short");
  }
}

}  // namespace

RecallDataset gen_recall_dataset(const RecallTaskSpec& spec) {
  validate_spec(spec);
  std::mt19937_64 rng(spec.seed);

  const std::int32_t filler = 0;
  const int key_lo = 1;
  const int n_keys = spec.vocab_size / 2 - 1;
  const int value_lo = spec.vocab_size / 2;
  const int n_values = spec.vocab_size - value_lo;
  const int query_pos = spec.seq_len - 2;
  const int answer_pos = spec.seq_len - 1;

  std::uniform_int_distribution<int> value_dist(0, n_values - 1);
  std::uniform_int_distribution<int> pair_dist(0, spec.n_pairs - 1);

  RecallDataset ds;
  ds.vocab_size = spec.vocab_size;
  ds.seq_len = spec.seq_len;
  ds.sequences.reserve(static_cast<std::size_t>(spec.n_sequences));

  std::vector<int> key_pool(static_cast<std::size_t>(n_keys));
  for (int i = 0; i < n_keys; ++i) key_pool[static_cast<std::size_t>(i)] = key_lo + i;

  for (int s = 0; s < spec.n_sequences; ++s) {
    // Distinct keys via a partial Fisher-Yates over the key alphabet.
    for (int i = 0; i < spec.n_pairs; ++i) {
      std::uniform_int_distribution<int> pick(i, n_keys - 1);
      std::swap(key_pool[static_cast<std::size_t>(i)],
                key_pool[static_cast<std::size_t>(pick(rng))]);
    }
    std::vector<std::int32_t> keys(static_cast<std::size_t>(spec.n_pairs));
    std::vector<std::int32_t> values(static_cast<std::size_t>(spec.n_pairs));
    for (int i = 0; i < spec.n_pairs; ++i) {
      keys[static_cast<std::size_t>(i)] =
          static_cast<std::int32_t>(key_pool[static_cast<std::size_t>(i)]);
      values[static_cast<std::size_t>(i)] =
          static_cast<std::int32_t>(value_lo + value_dist(rng));
    }
    const int queried = pair_dist(rng);

    RecallSequence seq;
    seq.tokens.assign(static_cast<std::size_t>(spec.seq_len), filler);
    seq.distance = spec.distance;
    seq.answer_pos = answer_pos;

    const int key_pos = query_pos - spec.distance;
    seq.tokens[static_cast<std::size_t>(key_pos)] = keys[static_cast<std::size_t>(queried)];
    seq.tokens[static_cast<std::size_t>(key_pos + 1)] =
        values[static_cast<std::size_t>(queried)];

    // Remaining pairs fill the earliest free consecutive slots before the query.
    int p = 0;
    for (int i = 0; i < spec.n_pairs; ++i) {
      if (i == queried) continue;
      while (p + 1 < query_pos &&
             (p == key_pos || p == key_pos + 1 || p + 1 == key_pos)) {
        ++p;
      }
      if (p + 1 >= query_pos) {
        throw ShapeError("recall task layout infeasible: pairs do not fit");
      }
      seq.tokens[static_cast<std::size_t>(p)] = keys[static_cast<std::size_t>(i)];
      seq.tokens[static_cast<std::size_t>(p + 1)] = values[static_cast<std::size_t>(i)];
      p += 2;
    }

    seq.tokens[static_cast<std::size_t>(query_pos)] = keys[static_cast<std::size_t>(queried)];
    seq.tokens[static_cast<std::size_t>(answer_pos)] =
        values[static_cast<std::size_t>(queried)];
    ds.sequences.push_back(std::move(seq));
  }
  return ds;
}

RecallDataset gen_mixed_recall_dataset(const RecallTaskSpec& base,
                                       const std::vector<int>& distances) {
  if (distances.empty()) throw ShapeError("need at least one distance");
  std::vector<RecallDataset> parts;
  parts.reserve(distances.size());
  for (std::size_t i = 0; i < distances.size(); ++i) {
    RecallTaskSpec spec = base;
    spec.distance = distances[i];
    spec.seed = base.seed + i;  // distinct streams per distance
    parts.push_back(gen_recall_dataset(spec));
  }
  RecallDataset mixed;
  mixed.vocab_size = base.vocab_size;
  mixed.seq_len = base.seq_len;
  for (int s = 0; s < base.n_sequences; ++s) {
    for (auto& part : parts) {
      mixed.sequences.push_back(part.sequences[static_cast<std::size_t>(s)]);
    }
  }
  return mixed;
}

std::vector<Batch> RecallDataset::to_batches(int batch_size) const {
  if (batch_size < 1) throw ShapeError("batch_size must be >= 1");
  std::vector<Batch> batches;
  const Index T = seq_len;
  for (std::size_t start = 0; start < sequences.size();
       start += static_cast<std::size_t>(batch_size)) {
    const Index b_count = static_cast<Index>(
        std::min<std::size_t>(static_cast<std::size_t>(batch_size),
                              sequences.size() - start));
    Batch batch;
    batch.token_ids.resize(b_count, T);
    batch.targets.resize(b_count, T);
    for (Index b = 0; b < b_count; ++b) {
      const auto& toks = sequences[start + static_cast<std::size_t>(b)].tokens;
      for (Index t = 0; t < T; ++t) {
        batch.token_ids(b, t) = toks[static_cast<std::size_t>(t)];
        batch.targets(b, t) =
            t + 1 < T ? toks[static_cast<std::size_t>(t + 1)] : 0;
      }
    }
    batches.push_back(std::move(batch));
  }
  return batches;
}

std::map<int, double> evaluate_recall(const lm::ModelParams& params,
                                      const lm::ModelConfig& config,
                                      const RecallDataset& dataset) {
  if (dataset.sequences.empty()) {
    throw DomainError("evaluate_recall requires a nonempty dataset");
  }
  lm::CptrState state;
  if (config.cptr_enabled) state = lm::CptrState::make(params, config);

  std::map<int, long> hits, totals;
  const int eval_batch = 32;
  const std::vector<Batch> batches = dataset.to_batches(eval_batch);
  std::size_t seq_idx = 0;
  for (const Batch& batch : batches) {
    const Matrix logits = lm::forward(params, config, batch, &state);
    const Index T = batch.token_ids.cols();
    for (Index b = 0; b < batch.token_ids.rows(); ++b, ++seq_idx) {
      const RecallSequence& seq = dataset.sequences[seq_idx];
      const Index row = b * T + (seq.answer_pos - 1);
      Index best = 0;
      double best_val = logits(row, 0);
      for (Index v = 1; v < config.vocab_size; ++v) {
        if (logits(row, v) > best_val) {
          best = v;
          best_val = logits(row, v);
        }
      }
      totals[seq.distance] += 1;
      if (best == seq.tokens[static_cast<std::size_t>(seq.answer_pos)]) {
        hits[seq.distance] += 1;
      }
    }
  }
  std::map<int, double> acc;
  for (const auto& [dist, total] : totals) {
    acc[dist] = static_cast<double>(hits[dist]) / static_cast<double>(total);
  }
  return acc;
}

namespace {

constexpr char kDatasetMagic[6] = {'C', 'P', 'T', 'R', 'D', 'S'};

template <typename T>
void write_le(std::ostream& os, T v) {
  unsigned char buf[sizeof(T)];
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    buf[i] = static_cast<unsigned char>(static_cast<std::uint64_t>(v) >> (8 * i));
  }
  os.write(reinterpret_cast<const char*>(buf), sizeof(T));
}

template <typename T>
T read_le(std::istream& is) {
  unsigned char buf[sizeof(T)];
  is.read(reinterpret_cast<char*>(buf), sizeof(T));
  if (!is) throw std::runtime_error("dataset file truncated");
  std::uint64_t v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) {
    v |= static_cast<std::uint64_t>(buf[i]) << (8 * i);
  }
  return static_cast<T>(v);
}

}  // namespace

void save_dataset(const std::string& path, const RecallDataset& dataset) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot open dataset file for writing: " + path);
  os.write(kDatasetMagic, sizeof(kDatasetMagic));
  write_le<std::uint8_t>(os, 1);
  write_le<std::uint32_t>(os, static_cast<std::uint32_t>(dataset.vocab_size));
  write_le<std::uint32_t>(os, static_cast<std::uint32_t>(dataset.seq_len));
  write_le<std::uint64_t>(os, dataset.sequences.size());
  for (const auto& seq : dataset.sequences) {
    write_le<std::uint32_t>(os, static_cast<std::uint32_t>(seq.distance));
    write_le<std::uint32_t>(os, static_cast<std::uint32_t>(seq.answer_pos));
    for (std::int32_t t : seq.tokens) write_le<std::uint32_t>(os, static_cast<std::uint32_t>(t));
  }
  if (!os) throw std::runtime_error("failed writing dataset file: " + path);
}

RecallDataset load_dataset(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw std::runtime_error("cannot open dataset file: " + path);
  char magic[6];
  is.read(magic, sizeof(magic));
  if (!is || std::memcmp(magic, kDatasetMagic, sizeof(magic)) != 0) {
    throw std::runtime_error("bad dataset magic");
  }
  if (read_le<std::uint8_t>(is) != 1) throw std::runtime_error("bad dataset version");
  RecallDataset ds;
  ds.vocab_size = static_cast<int>(read_le<std::uint32_t>(is));
  ds.seq_len = static_cast<int>(read_le<std::uint32_t>(is));
  const std::uint64_t n = read_le<std::uint64_t>(is);
  ds.sequences.resize(n);
  for (auto& seq : ds.sequences) {
    seq.distance = static_cast<int>(read_le<std::uint32_t>(is));
    seq.answer_pos = static_cast<int>(read_le<std::uint32_t>(is));
    seq.tokens.resize(static_cast<std::size_t>(ds.seq_len));
    for (auto& t : seq.tokens) {
      t = static_cast<std::int32_t>(read_le<std::uint32_t>(is));
    }
  }
  return ds;
}

std::uint64_t token_stream_hash(const std::vector<Batch>& batches) {
  std::uint64_t h = 14695981039346656037ULL;
  for (const Batch& batch : batches) {
    for (Index b = 0; b < batch.token_ids.rows(); ++b) {
      for (Index t = 0; t < batch.token_ids.cols(); ++t) {
        const std::uint32_t v = static_cast<std::uint32_t>(batch.token_ids(b, t));
        unsigned char buf[4] = {static_cast<unsigned char>(v),
                                static_cast<unsigned char>(v >> 8),
                                static_cast<unsigned char>(v >> 16),
                                static_cast<unsigned char>(v >> 24)};
        h = fnv1a64(buf, sizeof(buf), h);
      }
    }
  }
  return h;
}

}  // namespace cptr::harness
