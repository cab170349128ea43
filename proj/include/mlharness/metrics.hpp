#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mlharness/loadgen.hpp"

namespace mlh {

inline constexpr std::array<double, 5> kReportPercentiles = {50.0, 90.0, 95.0, 99.0, 99.9};

// "50", "90", "95", "99", "99.9".
std::string percentile_key(double p);

struct AccuracyResult {
  std::uint64_t correct = 0;
  std::uint64_t total = 0;
  std::string metric_name = "top1";

  double value() const noexcept {
    return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total);
  }
  bool operator==(const AccuracyResult&) const = default;
};

struct RunReport {
  std::string model;
  std::string system;
  Scenario scenario = Scenario::SingleStream;
  TestMode mode = TestMode::Performance;
  std::uint64_t query_count = 0;
  std::uint64_t sample_count = 0;
  Nanos elapsed{0};
  double throughput = 0.0;  // samples/s
  std::map<std::string, Nanos> percentiles;  // keyed by percentile_key
  std::optional<double> achieved_qps;         // Server
  std::optional<double> scheduled_qps;        // Server
  std::optional<Nanos> max_issue_delay;       // Server
  std::optional<std::uint64_t> samples_per_query;  // MultiStream
  Nanos model_time_total{0};
  Nanos post_time_total{0};
  std::optional<AccuracyResult> accuracy;
  std::uint64_t seed = 0;
  std::map<std::string, std::string> config;

  bool operator==(const RunReport&) const = default;
};

// EmptyRun on no records. Throughput is sample_count / elapsed, or 0 when
// elapsed is 0.
RunReport summarize(std::span<const LatencyRecord> records, const ScenarioConfig& cfg, Nanos elapsed);
// Adds the scheduled server rate from the arrival offsets.
RunReport summarize(const RunResult& result);

// LengthMismatch on unequal lengths, EmptyInput on empty lists.
AccuracyResult top1_accuracy(std::span<const std::int64_t> predictions,
                             std::span<const std::int64_t> labels);

// Class id of a backend output: a one-element integer tensor is the id
// itself; otherwise the first maximum of the flattened values.
std::int64_t predicted_class(const TensorList& outputs);

// Predicted classes of an accuracy run against labels indexed by sample.
AccuracyResult score_accuracy(const RunResult& result, std::span<const std::int64_t> labels);

// Canonical JSON with sorted keys, newline-terminated. parse_report rejects
// unknown keys (ParseError naming the key) and headline values that disagree
// with the underlying fields.
std::string serialize_report(const RunReport& report);
RunReport parse_report(std::string_view text);

// The scenario headline as (key, value): offline_samples_per_s, p90_ns,
// p99_ns, or p99_ns plus samples_per_query.
std::vector<std::pair<std::string, double>> headline_metrics(const RunReport& report);

// Plot rows of (metric, value) for one report; all reports of a scenario
// yield the same metric list.
std::vector<std::pair<std::string, double>> plot_metrics(const RunReport& report);
inline constexpr std::string_view kPlotCsvHeader = "model,system,scenario,metric,value";
std::string plot_csv(std::span<const RunReport> reports);

}  // namespace mlh
