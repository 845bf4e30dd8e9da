#include "cptr/checkpoint.hpp"

#include "cptr/config_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

namespace cptr::harness {

namespace {

static_assert(std::endian::native == std::endian::little,
              "checkpoint writer assumes a little-endian host");

constexpr char kMagic[4] = {'C', 'P', 'T', 'R'};
constexpr std::uint8_t kVersion = 0x01;

struct TensorRef {
  std::string name;
  std::vector<Index> shape;
  std::vector<double> values;  // row-major
};

template <typename Params>
std::vector<TensorRef> tensor_table(Params& params) {
  std::vector<TensorRef> table;
  auto add_matrix = [&](const std::string& name, const Matrix& m) {
    TensorRef r{name, {m.rows(), m.cols()}, {}};
    r.values.reserve(static_cast<std::size_t>(m.size()));
    for (Index i = 0; i < m.rows(); ++i)
      for (Index j = 0; j < m.cols(); ++j) r.values.push_back(m(i, j));
    table.push_back(std::move(r));
  };
  auto add_vector = [&](const std::string& name, const Vector& v) {
    TensorRef r{name, {v.size()}, {v.data(), v.data() + v.size()}};
    table.push_back(std::move(r));
  };
  auto add_tensor = [&](const std::string& name, const DenseTensor& t) {
    TensorRef r{name, t.shape(), {t.data(), t.data() + t.size()}};
    table.push_back(std::move(r));
  };

  add_matrix("tok_emb", params.tok_emb);
  add_matrix("pos_emb", params.pos_emb);
  for (std::size_t l = 0; l < params.blocks.size(); ++l) {
    const auto& b = params.blocks[l];
    const std::string p = "block" + std::to_string(l) + ".";
    add_matrix(p + "wq", b.wq);
    add_matrix(p + "wk", b.wk);
    add_matrix(p + "wv", b.wv);
    add_matrix(p + "wo", b.wo);
    add_vector(p + "ln1_gain", b.ln1_gain);
    add_vector(p + "ln1_bias", b.ln1_bias);
    add_vector(p + "ln2_gain", b.ln2_gain);
    add_vector(p + "ln2_bias", b.ln2_bias);
    add_matrix(p + "w1", b.w1);
    add_vector(p + "b1", b.b1);
    add_matrix(p + "w2", b.w2);
    add_vector(p + "b2", b.b2);
    add_tensor(p + "reconfig.core_gate", b.reconfig.core_gate);
    add_matrix(p + "reconfig.residual_u", b.reconfig.residual_u);
    add_matrix(p + "reconfig.residual_v", b.reconfig.residual_v);
    add_matrix(p + "reconfig.residual_z", b.reconfig.residual_z);
  }
  return table;
}

void store_values(lm::ModelParams& params, const std::string& name,
                  const std::vector<Index>& shape, const double* values) {
  auto set_matrix = [&](Matrix& m) {
    if (shape.size() != 2 || m.rows() != shape[0] || m.cols() != shape[1]) {
      throw CheckpointError(CheckpointError::Kind::manifest,
                            "shape mismatch for tensor '" + name + "'");
    }
    std::size_t idx = 0;
    for (Index i = 0; i < m.rows(); ++i)
      for (Index j = 0; j < m.cols(); ++j) m(i, j) = values[idx++];
  };
  auto set_vector = [&](Vector& v) {
    if (shape.size() != 1 || v.size() != shape[0]) {
      throw CheckpointError(CheckpointError::Kind::manifest,
                            "shape mismatch for tensor '" + name + "'");
    }
    for (Index i = 0; i < v.size(); ++i) v[i] = values[static_cast<std::size_t>(i)];
  };
  auto set_tensor = [&](DenseTensor& t) {
    if (shape != t.shape()) {
      throw CheckpointError(CheckpointError::Kind::manifest,
                            "shape mismatch for tensor '" + name + "'");
    }
    for (Index i = 0; i < t.size(); ++i) t[i] = values[static_cast<std::size_t>(i)];
  };

  if (name == "tok_emb") return set_matrix(params.tok_emb);
  if (name == "pos_emb") return set_matrix(params.pos_emb);
  const auto dot = name.find('.');
  if (name.rfind("block", 0) == 0 && dot != std::string::npos) {
    const std::size_t l = std::stoul(name.substr(5, dot - 5));
    if (l >= params.blocks.size()) {
      throw CheckpointError(CheckpointError::Kind::manifest,
                            "tensor '" + name + "' out of block range");
    }
    auto& b = params.blocks[l];
    const std::string field = name.substr(dot + 1);
    if (field == "wq") return set_matrix(b.wq);
    if (field == "wk") return set_matrix(b.wk);
    if (field == "wv") return set_matrix(b.wv);
    if (field == "wo") return set_matrix(b.wo);
    if (field == "ln1_gain") return set_vector(b.ln1_gain);
    if (field == "ln1_bias") return set_vector(b.ln1_bias);
    if (field == "ln2_gain") return set_vector(b.ln2_gain);
    if (field == "ln2_bias") return set_vector(b.ln2_bias);
    if (field == "w1") return set_matrix(b.w1);
    if (field == "b1") return set_vector(b.b1);
    if (field == "w2") return set_matrix(b.w2);
    if (field == "b2") return set_vector(b.b2);
    if (field == "reconfig.core_gate") return set_tensor(b.reconfig.core_gate);
    if (field == "reconfig.residual_u") return set_matrix(b.reconfig.residual_u);
    if (field == "reconfig.residual_v") return set_matrix(b.reconfig.residual_v);
    if (field == "reconfig.residual_z") return set_matrix(b.reconfig.residual_z);
  }
  throw CheckpointError(CheckpointError::Kind::manifest,
                        "unknown tensor '" + name + "'");
}

std::string config_lines(const lm::ModelConfig& m) {
  std::string out;
  out += "config.vocab_size=" + std::to_string(m.vocab_size) + "\n";
  out += "config.d_model=" + std::to_string(m.d_model) + "\n";
  out += "config.n_heads=" + std::to_string(m.n_heads) + "\n";
  out += "config.n_layers=" + std::to_string(m.n_layers) + "\n";
  out += "config.d_ff=" + std::to_string(m.d_ff) + "\n";
  out += "config.max_seq_len=" + std::to_string(m.max_seq_len) + "\n";
  out += "config.cptr_enabled=" + std::string(m.cptr_enabled ? "1" : "0") + "\n";
  out += "config.cptr_ranks=" + std::to_string(m.cptr_ranks[0]) + "," +
         std::to_string(m.cptr_ranks[1]) + "," + std::to_string(m.cptr_ranks[2]) + "\n";
  out += "config.cptr_refresh_interval=" + std::to_string(m.cptr_refresh_interval) + "\n";
  out += "config.ffn_split_k=" + std::to_string(m.ffn_split_k) + "\n";
  out += "config.seed=" + std::to_string(m.seed) + "\n";
  return out;
}

void apply_config_line(lm::ModelConfig& m, const std::string& key,
                       const std::string& value) {
  try {
    if (key == "vocab_size") m.vocab_size = std::stoi(value);
    else if (key == "d_model") m.d_model = std::stoi(value);
    else if (key == "n_heads") m.n_heads = std::stoi(value);
    else if (key == "n_layers") m.n_layers = std::stoi(value);
    else if (key == "d_ff") m.d_ff = std::stoi(value);
    else if (key == "max_seq_len") m.max_seq_len = std::stoi(value);
    else if (key == "cptr_enabled") m.cptr_enabled = value == "1";
    else if (key == "cptr_ranks") {
      std::stringstream ss(value);
      std::string item;
      for (int i = 0; i < 3; ++i) {
        if (!std::getline(ss, item, ',')) {
          throw CheckpointError(CheckpointError::Kind::manifest, "bad cptr_ranks");
        }
        m.cptr_ranks[static_cast<std::size_t>(i)] = std::stoll(item);
      }
    } else if (key == "cptr_refresh_interval") m.cptr_refresh_interval = std::stoi(value);
    else if (key == "ffn_split_k") m.ffn_split_k = std::stoi(value);
    else if (key == "seed") m.seed = std::stoull(value);
    else {
      throw CheckpointError(CheckpointError::Kind::manifest,
                            "unknown config key '" + key + "'");
    }
  } catch (const CheckpointError&) {
    throw;
  } catch (const std::exception&) {
    throw CheckpointError(CheckpointError::Kind::manifest,
                          "bad config value for '" + key + "'");
  }
}

}  // namespace

void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
  const auto table = tensor_table(ckpt.params);

  std::vector<double> payload;
  std::string manifest = config_lines(ckpt.config);
  manifest += "step=" + std::to_string(ckpt.step) + "\n";
  manifest += "rng=" + ckpt.rng_state + "\n";
  for (const auto& t : table) {
    manifest += "tensor " + t.name + " " + std::to_string(t.shape.size());
    for (Index d : t.shape) manifest += " " + std::to_string(d);
    manifest += " " + std::to_string(payload.size()) + "\n";
    payload.insert(payload.end(), t.values.begin(), t.values.end());
  }
  manifest += "payload_count=" + std::to_string(payload.size()) + "\n";
  const std::uint64_t checksum =
      fnv1a64(payload.data(), payload.size() * sizeof(double));
  manifest += "payload_checksum=" + hex64(checksum) + "\n";

  std::ofstream os(path, std::ios::binary);
  if (!os) {
    throw CheckpointError(CheckpointError::Kind::io,
                          "cannot open checkpoint for writing: " + path);
  }
  os.write(kMagic, sizeof(kMagic));
  os.put(static_cast<char>(kVersion));
  const std::uint32_t mlen = static_cast<std::uint32_t>(manifest.size());
  unsigned char lenbuf[4] = {
      static_cast<unsigned char>(mlen), static_cast<unsigned char>(mlen >> 8),
      static_cast<unsigned char>(mlen >> 16), static_cast<unsigned char>(mlen >> 24)};
  os.write(reinterpret_cast<const char*>(lenbuf), 4);
  os.write(manifest.data(), static_cast<std::streamsize>(manifest.size()));
  os.write(reinterpret_cast<const char*>(payload.data()),
           static_cast<std::streamsize>(payload.size() * sizeof(double)));
  if (!os) {
    throw CheckpointError(CheckpointError::Kind::io,
                          "failed writing checkpoint: " + path);
  }
}

Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) {
    throw CheckpointError(CheckpointError::Kind::io,
                          "cannot open checkpoint: " + path);
  }
  char magic[4];
  is.read(magic, sizeof(magic));
  if (!is) throw CheckpointError(CheckpointError::Kind::truncated, "truncated header");
  if (std::memcmp(magic, kMagic, sizeof(magic)) != 0) {
    throw CheckpointError(CheckpointError::Kind::bad_magic, "bad checkpoint magic");
  }
  const int version = is.get();
  if (version == EOF) {
    throw CheckpointError(CheckpointError::Kind::truncated, "truncated header");
  }
  if (version != kVersion) {
    throw CheckpointError(CheckpointError::Kind::bad_version,
                          "unsupported checkpoint version " + std::to_string(version));
  }
  unsigned char lenbuf[4];
  is.read(reinterpret_cast<char*>(lenbuf), 4);
  if (!is) throw CheckpointError(CheckpointError::Kind::truncated, "truncated header");
  const std::uint32_t mlen = static_cast<std::uint32_t>(lenbuf[0]) |
                             (static_cast<std::uint32_t>(lenbuf[1]) << 8) |
                             (static_cast<std::uint32_t>(lenbuf[2]) << 16) |
                             (static_cast<std::uint32_t>(lenbuf[3]) << 24);
  std::string manifest(mlen, '\0');
  is.read(manifest.data(), mlen);
  if (!is) throw CheckpointError(CheckpointError::Kind::truncated, "truncated manifest");

  Checkpoint ckpt;
  struct Entry {
    std::string name;
    std::vector<Index> shape;
    std::size_t offset;
    std::size_t count;
  };
  std::vector<Entry> entries;
  std::size_t payload_count = 0;
  std::string checksum_hex;
  bool have_count = false, have_checksum = false;

  std::stringstream ms(manifest);
  std::string line;
  while (std::getline(ms, line)) {
    if (line.empty()) continue;
    if (line.rfind("config.", 0) == 0) {
      const auto eq = line.find('=');
      if (eq == std::string::npos) {
        throw CheckpointError(CheckpointError::Kind::manifest, "bad config line");
      }
      apply_config_line(ckpt.config, line.substr(7, eq - 7), line.substr(eq + 1));
    } else if (line.rfind("step=", 0) == 0) {
      ckpt.step = std::stol(line.substr(5));
    } else if (line.rfind("rng=", 0) == 0) {
      ckpt.rng_state = line.substr(4);
    } else if (line.rfind("payload_count=", 0) == 0) {
      payload_count = std::stoul(line.substr(14));
      have_count = true;
    } else if (line.rfind("payload_checksum=", 0) == 0) {
      checksum_hex = line.substr(17);
      have_checksum = true;
    } else if (line.rfind("tensor ", 0) == 0) {
      std::stringstream ls(line.substr(7));
      Entry e;
      std::size_t order = 0;
      if (!(ls >> e.name >> order)) {
        throw CheckpointError(CheckpointError::Kind::manifest, "bad tensor line");
      }
      e.count = 1;
      for (std::size_t i = 0; i < order; ++i) {
        Index d = 0;
        if (!(ls >> d) || d < 1) {
          throw CheckpointError(CheckpointError::Kind::manifest, "bad tensor shape");
        }
        e.shape.push_back(d);
        e.count *= static_cast<std::size_t>(d);
      }
      if (!(ls >> e.offset)) {
        throw CheckpointError(CheckpointError::Kind::manifest, "bad tensor offset");
      }
      entries.push_back(std::move(e));
    } else {
      throw CheckpointError(CheckpointError::Kind::manifest,
                            "unrecognized manifest line: " + line);
    }
  }
  if (!have_count || !have_checksum) {
    throw CheckpointError(CheckpointError::Kind::manifest,
                          "manifest missing payload accounting");
  }

  std::vector<double> payload(payload_count);
  is.read(reinterpret_cast<char*>(payload.data()),
          static_cast<std::streamsize>(payload_count * sizeof(double)));
  if (static_cast<std::size_t>(is.gcount()) != payload_count * sizeof(double)) {
    throw CheckpointError(CheckpointError::Kind::truncated, "truncated payload");
  }
  const std::uint64_t checksum =
      fnv1a64(payload.data(), payload.size() * sizeof(double));
  if (hex64(checksum) != checksum_hex) {
    throw CheckpointError(CheckpointError::Kind::checksum,
                          "payload checksum mismatch");
  }

  ckpt.config.validate();
  ckpt.params = lm::ModelParams::zeros_like(ckpt.config);
  const auto expected = tensor_table(ckpt.params);
  if (entries.size() != expected.size()) {
    throw CheckpointError(CheckpointError::Kind::manifest,
                          "tensor table does not match the configuration");
  }
  for (const auto& e : entries) {
    if (e.offset + e.count > payload.size()) {
      throw CheckpointError(CheckpointError::Kind::manifest,
                            "tensor '" + e.name + "' overruns payload");
    }
    store_values(ckpt.params, e.name, e.shape, payload.data() + e.offset);
  }
  return ckpt;
}

}  // namespace cptr::harness
