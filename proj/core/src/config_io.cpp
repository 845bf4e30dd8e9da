#include "cptr/config_io.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

namespace cptr::harness {

std::uint64_t fnv1a64(const void* data, std::size_t n, std::uint64_t h) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ULL;
  }
  return h;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

namespace {

std::string trim(const std::string& s) {
  const auto a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  const auto b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

bool parse_bool(const std::string& v) {
  if (v == "on" || v == "true" || v == "1") return true;
  if (v == "off" || v == "false" || v == "0") return false;
  throw ConfigError("expected on/off value, got '" + v + "'");
}

std::vector<long long> parse_int_list(const std::string& v) {
  std::vector<long long> out;
  std::stringstream ss(v);
  std::string item;
  while (std::getline(ss, item, ',')) {
    out.push_back(std::stoll(trim(item)));
  }
  if (out.empty()) throw ConfigError("expected a comma-separated integer list");
  return out;
}

std::string format_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string join_ints(const std::vector<int>& v) {
  std::string out;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(v[i]);
  }
  return out;
}

}  // namespace

ExperimentConfig parse_config_text(const std::string& text) {
  ExperimentConfig c;
  std::stringstream ss(text);
  std::string line;
  int lineno = 0;
  while (std::getline(ss, line)) {
    ++lineno;
    const std::string stripped = trim(line);
    if (stripped.empty() || stripped[0] == '#') continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
    }
    const std::string key = trim(stripped.substr(0, eq));
    const std::string value = trim(stripped.substr(eq + 1));
    try {
      if (key == "vocab_size") {
        c.model.vocab_size = std::stoi(value);
        c.task.vocab_size = c.model.vocab_size;
      } else if (key == "d_model") {
        c.model.d_model = std::stoi(value);
      } else if (key == "n_heads") {
        c.model.n_heads = std::stoi(value);
      } else if (key == "n_layers") {
        c.model.n_layers = std::stoi(value);
      } else if (key == "d_ff") {
        c.model.d_ff = std::stoi(value);
      } else if (key == "max_seq_len") {
        c.model.max_seq_len = std::stoi(value);
        c.task.seq_len = c.model.max_seq_len;
      } else if (key == "cptr_enabled") {
        c.model.cptr_enabled = parse_bool(value);
      } else if (key == "cptr_ranks") {
        const auto r = parse_int_list(value);
        if (r.size() != 3) throw ConfigError("cptr_ranks needs three entries");
        c.model.cptr_ranks = {static_cast<Index>(r[0]), static_cast<Index>(r[1]),
                              static_cast<Index>(r[2])};
      } else if (key == "cptr_refresh_interval") {
        c.model.cptr_refresh_interval = std::stoi(value);
      } else if (key == "ffn_split_k") {
        c.model.ffn_split_k = std::stoi(value);
      } else if (key == "seed") {
        c.model.seed = std::stoull(value);
        c.task.seed = c.model.seed;
      } else if (key == "n_pairs") {
        c.task.n_pairs = std::stoi(value);
      } else if (key == "n_sequences") {
        c.task.n_sequences = std::stoi(value);
      } else if (key == "distances") {
        c.distances.clear();
        for (long long d : parse_int_list(value)) c.distances.push_back(static_cast<int>(d));
      } else if (key == "train_steps") {
        c.train_steps = std::stoi(value);
      } else if (key == "batch_size") {
        c.batch_size = std::stoi(value);
      } else if (key == "lr") {
        c.lr = std::stod(value);
      } else if (key == "eval_sequences") {
        c.eval_sequences = std::stoi(value);
      } else if (key == "latency_batch_sizes") {
        c.latency_batch_sizes.clear();
        for (long long b : parse_int_list(value)) {
          c.latency_batch_sizes.push_back(static_cast<int>(b));
        }
      } else if (key == "latency_tokens") {
        c.latency_tokens = std::stoi(value);
      } else if (key == "latency_repeats") {
        c.latency_repeats = std::stoi(value);
      } else {
        throw ConfigError("unknown config key '" + key + "'");
      }
    } catch (const ConfigError&) {
      throw;
    } catch (const std::exception& e) {
      throw ConfigError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return c;
}

ExperimentConfig load_config_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config file: " + path);
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_config_text(ss.str());
}

std::string serialize_config(const ExperimentConfig& c) {
  std::string out;
  auto kv = [&](const std::string& k, const std::string& v) {
    out += k + " = " + v + "\n";
  };
  kv("vocab_size", std::to_string(c.model.vocab_size));
  kv("d_model", std::to_string(c.model.d_model));
  kv("n_heads", std::to_string(c.model.n_heads));
  kv("n_layers", std::to_string(c.model.n_layers));
  kv("d_ff", std::to_string(c.model.d_ff));
  kv("max_seq_len", std::to_string(c.model.max_seq_len));
  kv("cptr_enabled", c.model.cptr_enabled ? "on" : "off");
  kv("cptr_ranks", std::to_string(c.model.cptr_ranks[0]) + "," +
                       std::to_string(c.model.cptr_ranks[1]) + "," +
                       std::to_string(c.model.cptr_ranks[2]));
  kv("cptr_refresh_interval", std::to_string(c.model.cptr_refresh_interval));
  kv("ffn_split_k", std::to_string(c.model.ffn_split_k));
  kv("seed", std::to_string(c.model.seed));
  kv("n_pairs", std::to_string(c.task.n_pairs));
  kv("n_sequences", std::to_string(c.task.n_sequences));
  kv("distances", join_ints(c.distances));
  kv("train_steps", std::to_string(c.train_steps));
  kv("batch_size", std::to_string(c.batch_size));
  kv("lr", format_double(c.lr));
  kv("eval_sequences", std::to_string(c.eval_sequences));
  kv("latency_batch_sizes", join_ints(c.latency_batch_sizes));
  kv("latency_tokens", std::to_string(c.latency_tokens));
  kv("latency_repeats", std::to_string(c.latency_repeats));
  return out;
}

std::string config_fingerprint(const lm::ModelConfig& m) {
  std::string canon;
  canon += "vocab_size=" + std::to_string(m.vocab_size) + ";";
  canon += "d_model=" + std::to_string(m.d_model) + ";";
  canon += "n_heads=" + std::to_string(m.n_heads) + ";";
  canon += "n_layers=" + std::to_string(m.n_layers) + ";";
  canon += "d_ff=" + std::to_string(m.d_ff) + ";";
  canon += "max_seq_len=" + std::to_string(m.max_seq_len) + ";";
  canon += "cptr_enabled=" + std::string(m.cptr_enabled ? "1" : "0") + ";";
  canon += "cptr_ranks=" + std::to_string(m.cptr_ranks[0]) + "," +
           std::to_string(m.cptr_ranks[1]) + "," + std::to_string(m.cptr_ranks[2]) + ";";
  canon += "cptr_refresh_interval=" + std::to_string(m.cptr_refresh_interval) + ";";
  canon += "ffn_split_k=" + std::to_string(m.ffn_split_k) + ";";
  canon += "seed=" + std::to_string(m.seed) + ";";
  return hex64(fnv1a64(canon.data(), canon.size()));
}

}  // namespace cptr::harness
