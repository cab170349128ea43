#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "mlharness/clock.hpp"
#include "mlharness/sut.hpp"

namespace mlh {

enum class Scenario { Offline, SingleStream, Server, MultiStream };
enum class TestMode { Performance, Accuracy };

std::string_view scenario_name(Scenario s) noexcept;  // "single-stream" etc.
std::optional<Scenario> scenario_from_name(std::string_view name) noexcept;
std::string_view test_mode_name(TestMode m) noexcept;
std::optional<TestMode> test_mode_from_name(std::string_view name) noexcept;

inline constexpr std::uint64_t kDefaultMinQueryCount = 1024;
inline constexpr Nanos kDefaultMinDuration = std::chrono::seconds(10);

struct ScenarioConfig {
  Scenario scenario = Scenario::SingleStream;
  std::uint64_t min_query_count = kDefaultMinQueryCount;
  Nanos min_duration = kDefaultMinDuration;
  std::optional<double> target_qps;                 // Server
  std::optional<std::size_t> samples_per_query;     // MultiStream
  std::optional<std::size_t> offline_sample_count;  // Offline
  std::uint64_t seed = 0;
  TestMode mode = TestMode::Performance;

  // ConfigError unless the scenario-specific fields are present exactly when
  // required and in range.
  void validate() const;

  static ScenarioConfig single_stream(std::uint64_t min_query_count, Nanos min_duration);
  static ScenarioConfig multistream(std::size_t samples_per_query, std::uint64_t min_query_count,
                                    Nanos min_duration);
  static ScenarioConfig server(double target_qps, std::uint64_t min_query_count, Nanos min_duration);
  // One query; the count and duration floors are 1 and 0.
  static ScenarioConfig offline(std::size_t sample_count);
};

struct LatencyRecord {
  std::uint64_t query_id = 0;
  Nanos latency{0};  // last post_end - issue
  std::size_t sample_count = 0;
  Nanos model_time{0};
  Nanos post_time{0};
  Nanos scheduled_time{0};  // relative to run start
  Nanos issue_delay{0};     // actual issue - scheduled

  bool operator==(const LatencyRecord&) const = default;
};

struct SampleOutput {
  std::uint64_t query_id = 0;
  std::size_t sample_index = 0;
  TensorList outputs;
};

struct RunResult {
  ScenarioConfig config;
  std::vector<LatencyRecord> records;  // ascending query_id
  Nanos elapsed{0};
  // Dataset indices in query order, flattened.
  std::vector<std::size_t> issued;
  // Server only: scheduled arrival offsets from run start.
  std::vector<Nanos> arrivals;
  // Accuracy mode only, in query order.
  std::vector<SampleOutput> outputs;
  Nanos preprocess_time{0};
};

// Nearest rank: the ceil(p/100 * n)-th smallest value. EmptyInput on an empty
// list, RangeError for p outside (0, 100].
Nanos percentile(std::span<const Nanos> values, double p);

// Open-loop arrival offsets with exponential gaps of mean 1/qps drawn from
// its own stream of `seed`. Stops once both floors are met.
std::vector<Nanos> server_arrivals(std::uint64_t seed, double qps, std::uint64_t min_count,
                                   Nanos min_duration);
std::vector<Nanos> server_arrivals(std::uint64_t seed, double qps, std::size_t count);

// All engines load every dataset sample before the run starts and unload it
// afterwards; loading never counts toward latency or elapsed time.
RunResult run_offline(const ScenarioConfig& cfg, Sut& sut, Clock& clock);
RunResult run_single_stream(const ScenarioConfig& cfg, Sut& sut, Clock& clock);
RunResult run_multistream(const ScenarioConfig& cfg, Sut& sut, Clock& clock);
// Virtual clocks run a deterministic event simulation over max_concurrency
// lanes; real clocks use a dispatcher thread and a worker pool.
RunResult run_server(const ScenarioConfig& cfg, Sut& sut, Clock& clock);
RunResult run_scenario(const ScenarioConfig& cfg, Sut& sut, Clock& clock);

}  // namespace mlh
