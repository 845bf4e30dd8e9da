#include "cptr/report.hpp"

#include <json.hpp>

#include <cstdio>
#include <set>
#include <sstream>

namespace cptr::harness {

namespace {

std::string fixed1(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.1f", v);
  return buf;
}

std::string full(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::set<int> union_keys(const std::vector<MetricsReport>& reports,
                         std::map<int, double> MetricsReport::* field) {
  std::set<int> keys;
  for (const auto& r : reports) {
    for (const auto& [k, v] : r.*field) keys.insert(k);
  }
  return keys;
}

std::string emit_json(const std::vector<MetricsReport>& reports) {
  nlohmann::ordered_json out = nlohmann::ordered_json::array();
  for (const auto& r : reports) {
    nlohmann::ordered_json j;
    j["run_id"] = r.run_id;
    j["config_fingerprint"] = r.config_fingerprint;
    j["stream_hash"] = r.stream_hash;
    j["seed"] = r.seed;
    j["perplexity"] = r.perplexity;
    nlohmann::ordered_json recall;
    for (const auto& [d, a] : r.recall) recall[std::to_string(d)] = a;
    j["recall"] = recall;
    j["tokens_per_second"] = r.tokens_per_second;
    nlohmann::ordered_json latency;
    for (const auto& [b, ms] : r.ms_per_token) latency[std::to_string(b)] = ms;
    j["ms_per_token"] = latency;
    j["grad_stats"] = {{"mean", r.grad_stats.mean},
                       {"variance", r.grad_stats.variance},
                       {"max_over_mean", r.grad_stats.max_over_mean}};
    j["wall_clock_seconds"] = r.wall_clock_seconds;
    j["failed"] = r.failed;
    j["failed_step"] = r.failed_step;
    out.push_back(std::move(j));
  }
  return out.dump(2) + "\n";
}

std::string emit_csv(const std::vector<MetricsReport>& reports) {
  const auto schema = csv_schema(reports);
  std::string out;
  for (std::size_t i = 0; i < schema.size(); ++i) {
    if (i) out += ",";
    out += schema[i];
  }
  out += "\n";
  const auto distances = union_keys(reports, &MetricsReport::recall);
  const auto batches = union_keys(reports, &MetricsReport::ms_per_token);
  for (const auto& r : reports) {
    std::vector<std::string> cells;
    cells.push_back(r.run_id);
    cells.push_back(r.config_fingerprint);
    cells.push_back(r.stream_hash);
    cells.push_back(std::to_string(r.seed));
    cells.push_back(full(r.perplexity));
    for (int d : distances) {
      const auto it = r.recall.find(d);
      cells.push_back(it != r.recall.end() ? full(it->second) : "");
    }
    cells.push_back(full(r.tokens_per_second));
    for (int b : batches) {
      const auto it = r.ms_per_token.find(b);
      cells.push_back(it != r.ms_per_token.end() ? full(it->second) : "");
    }
    cells.push_back(full(r.grad_stats.mean));
    cells.push_back(full(r.grad_stats.variance));
    cells.push_back(full(r.grad_stats.max_over_mean));
    cells.push_back(full(r.wall_clock_seconds));
    cells.push_back(r.failed ? "1" : "0");
    cells.push_back(std::to_string(r.failed_step));
    for (std::size_t i = 0; i < cells.size(); ++i) {
      if (i) out += ",";
      out += cells[i];
    }
    out += "\n";
  }
  return out;
}

std::string emit_markdown(const std::vector<MetricsReport>& reports) {
  std::ostringstream os;
  const auto distances = union_keys(reports, &MetricsReport::recall);
  const auto batches = union_keys(reports, &MetricsReport::ms_per_token);

  os << "## Performance Metrics Comparison\n\n";
  os << "| Model | Perplexity | Tokens/sec |\n|---|---|---|\n";
  for (const auto& r : reports) {
    os << "| " << r.run_id << " | " << fixed1(r.perplexity) << " | "
       << fixed1(r.tokens_per_second) << " |\n";
  }

  os << "\n## Long-Range Dependency Recall Accuracy\n\n";
  os << "| Model |";
  for (int d : distances) os << " " << d << " Tokens (%) |";
  os << "\n|---|";
  for (std::size_t i = 0; i < distances.size(); ++i) os << "---|";
  os << "\n";
  for (const auto& r : reports) {
    os << "| " << r.run_id << " |";
    for (int d : distances) {
      const auto it = r.recall.find(d);
      os << " " << (it != r.recall.end() ? fixed1(100.0 * it->second) : "-") << " |";
    }
    os << "\n";
  }

  os << "\n## Token Generation Latency (ms per Token)\n\n";
  os << "| Model |";
  for (int b : batches) os << " Batch Size " << b << " |";
  os << "\n|---|";
  for (std::size_t i = 0; i < batches.size(); ++i) os << "---|";
  os << "\n";
  for (const auto& r : reports) {
    os << "| " << r.run_id << " |";
    for (int b : batches) {
      const auto it = r.ms_per_token.find(b);
      os << " " << (it != r.ms_per_token.end() ? fixed1(it->second) : "-") << " |";
    }
    os << "\n";
  }

  os << "\n## Gradient Stability\n\n";
  os << "| Model | Mean Norm | Variance | Max/Mean |\n|---|---|---|---|\n";
  for (const auto& r : reports) {
    os << "| " << r.run_id << " | " << full(r.grad_stats.mean) << " | "
       << full(r.grad_stats.variance) << " | " << full(r.grad_stats.max_over_mean)
       << " |\n";
  }
  return os.str();
}

}  // namespace

ReportFormat parse_report_format(const std::string& name) {
  if (name == "json") return ReportFormat::json;
  if (name == "csv") return ReportFormat::csv;
  if (name == "markdown") return ReportFormat::markdown;
  throw std::invalid_argument("unknown report format '" + name + "'");
}

std::vector<std::string> csv_schema(const std::vector<MetricsReport>& reports) {
  std::vector<std::string> schema = {"run_id", "config_fingerprint", "stream_hash",
                                     "seed", "perplexity"};
  for (int d : union_keys(reports, &MetricsReport::recall)) {
    schema.push_back("recall@" + std::to_string(d));
  }
  schema.push_back("tokens_per_second");
  for (int b : union_keys(reports, &MetricsReport::ms_per_token)) {
    schema.push_back("ms_per_token@" + std::to_string(b));
  }
  schema.insert(schema.end(), {"grad_mean", "grad_variance", "grad_max_over_mean",
                               "wall_clock_seconds", "failed", "failed_step"});
  return schema;
}

std::string emit_report(const std::vector<MetricsReport>& reports,
                        ReportFormat format) {
  if (reports.empty()) throw DomainError("emit_report requires at least one report");
  switch (format) {
    case ReportFormat::json: return emit_json(reports);
    case ReportFormat::csv: return emit_csv(reports);
    default: return emit_markdown(reports);
  }
}

}  // namespace cptr::harness
