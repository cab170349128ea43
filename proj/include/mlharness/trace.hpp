#pragma once

#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mlharness/clock.hpp"
#include "mlharness/tensor.hpp"

namespace mlh {

// Profiling depth: a model span contains layer spans, which contain kernels.
enum class TraceLevel : std::uint8_t { Model = 0, Layer = 1, Kernel = 2 };

std::string_view trace_level_name(TraceLevel level) noexcept;
std::optional<TraceLevel> trace_level_from_name(std::string_view name) noexcept;

using SpanId = std::uint64_t;

struct Span {
  SpanId span_id = 0;
  std::string run_id;
  TraceLevel level = TraceLevel::Model;
  std::string name;
  Nanos start{0};
  Nanos end{0};
  std::optional<SpanId> parent_id;
  Ctx attributes;

  Nanos duration() const noexcept { return end - start; }
  friend bool operator==(const Span&, const Span&) = default;
};

struct TraceSet {
  std::vector<Span> spans;
  std::map<std::string, TraceLevel, std::less<>> enabled_max_level;

  void enable_run(std::string run_id, TraceLevel max_level) {
    enabled_max_level[std::move(run_id)] = max_level;
  }
  std::vector<Span> spans_for_run(std::string_view run_id) const;

  friend bool operator==(const TraceSet&, const TraceSet&) = default;
};

// Appends `span`, keeping insertion order. LevelDisabled if the span's run
// is unknown or its level is deeper than the run allows; RangeError if
// start > end.
void record_span(TraceSet& trace, Span span);

// Thread-safe recorder used while queries are in flight.
class TraceRecorder {
 public:
  TraceRecorder() = default;
  TraceRecorder(std::string run_id, TraceLevel max_level) { enable_run(std::move(run_id), max_level); }

  void enable_run(std::string run_id, TraceLevel max_level);
  std::optional<TraceLevel> max_level(std::string_view run_id) const;

  // Assigns the next span id, then records. Returns the id.
  SpanId record(Span span);

  TraceSet snapshot() const;

 private:
  mutable std::mutex mu_;
  TraceSet trace_;
  SpanId next_id_ = 1;
};

struct Hierarchy {
  std::vector<Span> spans;      // insertion order, parent_id filled
  std::vector<SpanId> orphans;  // non-model spans without a container

  friend bool operator==(const Hierarchy&, const Hierarchy&) = default;
};

// Each span at level L+1 gets as parent the level-L span of the same run whose
// [start, end] contains it; among several, the shortest one, then the
// earliest recorded.
Hierarchy align_levels(const TraceSet& trace, std::string_view run_id);

// Combines runs of one workload recorded at increasing depths. Level-k spans
// come from the shallowest run that enabled level k and are rescaled into
// their parent's interval as measured by the shallower run; parents are
// matched by (name, ordinal). The result is aligned and carries the shallowest
// run's id. WorkloadMismatch if name sequences differ at a shared level.
TraceSet merge_leveled_runs(std::span<const TraceSet> runs);

struct LayerTime {
  std::string name;
  Nanos duration{0};
  friend bool operator==(const LayerTime&, const LayerTime&) = default;
};

// Longest individual layer spans, descending; ties go to the earlier start.
std::vector<LayerTime> top_k_layers(std::span<const Span> spans, std::size_t k);

// One JSON document per run: {"run_id", "enabled_max_level", "spans": [...]}.
std::string serialize_trace(const TraceSet& trace, std::string_view run_id);
// ParseError on malformed or inconsistent documents.
TraceSet parse_trace(std::string_view text);

}  // namespace mlh
