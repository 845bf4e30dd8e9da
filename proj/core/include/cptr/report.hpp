#pragma once

#include "cptr/model.hpp"

#include <cstdint>
#include <map>
#include <string>
#include <vector>

namespace cptr::harness {

enum class ReportFormat { json, csv, markdown };

ReportFormat parse_report_format(const std::string& name);

/// One run's metrics: perplexity, recall per definition-to-query distance,
/// throughput, per-token latency per batch size, gradient stability.
struct MetricsReport {
  std::string run_id;
  std::string config_fingerprint;
  std::string stream_hash;
  std::uint64_t seed = 0;
  double perplexity = 0.0;
  std::map<int, double> recall;        // distance -> accuracy fraction
  double tokens_per_second = 0.0;      // training throughput (timing field)
  std::map<int, double> ms_per_token;  // batch size -> latency (timing field)
  lm::GradStats grad_stats;
  double wall_clock_seconds = 0.0;     // timing field
  bool failed = false;
  long failed_step = -1;
};

// CSV column schema for the current set of reports (header row contents).
std::vector<std::string> csv_schema(const std::vector<MetricsReport>& reports);

std::string emit_report(const std::vector<MetricsReport>& reports,
                        ReportFormat format);

}  // namespace cptr::harness
