#include "mlharness/trace.hpp"

#include <algorithm>
#include <array>
#include <limits>
#include <numeric>
#include <set>

namespace mlh {

std::string_view trace_level_name(TraceLevel level) noexcept {
  switch (level) {
    case TraceLevel::Model: return "model";
    case TraceLevel::Layer: return "layer";
    case TraceLevel::Kernel: return "kernel";
  }
  return "model";
}

std::optional<TraceLevel> trace_level_from_name(std::string_view name) noexcept {
  if (name == "model") return TraceLevel::Model;
  if (name == "layer") return TraceLevel::Layer;
  if (name == "kernel") return TraceLevel::Kernel;
  return std::nullopt;
}

std::vector<Span> TraceSet::spans_for_run(std::string_view run_id) const {
  std::vector<Span> out;
  for (const auto& s : spans) {
    if (s.run_id == run_id) out.push_back(s);
  }
  return out;
}

void record_span(TraceSet& trace, Span span) {
  const auto it = trace.enabled_max_level.find(span.run_id);
  if (it == trace.enabled_max_level.end()) {
    fail(Errc::LevelDisabled, "run '" + span.run_id + "' has no enabled trace levels");
  }
  if (span.level > it->second) {
    fail(Errc::LevelDisabled, std::string(trace_level_name(span.level)) +
                                  " spans are disabled for run '" + span.run_id +
                                  "' (max level " + std::string(trace_level_name(it->second)) +
                                  ")");
  }
  if (span.start > span.end) fail(Errc::RangeError, "span '" + span.name + "' ends before it starts");
  trace.spans.push_back(std::move(span));
}

void TraceRecorder::enable_run(std::string run_id, TraceLevel max_level) {
  std::lock_guard lock(mu_);
  trace_.enable_run(std::move(run_id), max_level);
}

std::optional<TraceLevel> TraceRecorder::max_level(std::string_view run_id) const {
  std::lock_guard lock(mu_);
  const auto it = trace_.enabled_max_level.find(run_id);
  if (it == trace_.enabled_max_level.end()) return std::nullopt;
  return it->second;
}

SpanId TraceRecorder::record(Span span) {
  std::lock_guard lock(mu_);
  span.span_id = next_id_;
  record_span(trace_, std::move(span));
  return next_id_++;
}

TraceSet TraceRecorder::snapshot() const {
  std::lock_guard lock(mu_);
  return trace_;
}

// ---------------------------------------------------------------------------
// alignment

namespace {

constexpr std::array<TraceLevel, 2> kChildLevels = {TraceLevel::Layer, TraceLevel::Kernel};

TraceLevel parent_level(TraceLevel level) {
  return static_cast<TraceLevel>(static_cast<std::uint8_t>(level) - 1);
}

// For every span at `child_level`, the index (into `spans`) of its smallest
// containing span at the level above, if any.
std::vector<std::optional<std::size_t>> containers_for(const std::vector<Span>& spans,
                                                       TraceLevel child_level) {
  std::vector<std::size_t> parents;
  for (std::size_t i = 0; i < spans.size(); ++i) {
    if (spans[i].level == parent_level(child_level)) parents.push_back(i);
  }
  std::stable_sort(parents.begin(), parents.end(),
                   [&](std::size_t a, std::size_t b) { return spans[a].start < spans[b].start; });

  std::vector<std::optional<std::size_t>> result(spans.size());
  for (std::size_t i = 0; i < spans.size(); ++i) {
    const auto& child = spans[i];
    if (child.level != child_level) continue;
    auto pos = std::upper_bound(parents.begin(), parents.end(), child.start,
                                [&](Nanos t, std::size_t p) { return t < spans[p].start; });
    std::optional<std::size_t> best;
    Nanos best_len = Nanos::max();
    // Candidates start at or before the child; walking back, a container's
    // length is at least child.end - start, which only grows.
    while (pos != parents.begin()) {
      const auto p = *--pos;
      const auto& c = spans[p];
      if (child.end - c.start > best_len) break;
      if (c.end < child.end) continue;
      const auto len = c.duration();
      if (!best || len < best_len || (len == best_len && p < *best)) {
        best = p;
        best_len = len;
      }
    }
    result[i] = best;
  }
  return result;
}

}  // namespace

Hierarchy align_levels(const TraceSet& trace, std::string_view run_id) {
  Hierarchy h;
  h.spans = trace.spans_for_run(run_id);
  for (auto& s : h.spans) s.parent_id.reset();
  for (const auto level : kChildLevels) {
    const auto parents = containers_for(h.spans, level);
    for (std::size_t i = 0; i < h.spans.size(); ++i) {
      if (h.spans[i].level != level) continue;
      if (parents[i]) {
        h.spans[i].parent_id = h.spans[*parents[i]].span_id;
      } else {
        h.orphans.push_back(h.spans[i].span_id);
      }
    }
  }
  return h;
}

// ---------------------------------------------------------------------------
// leveled merge

namespace {

struct RunView {
  std::string run_id;
  TraceLevel max_level;
  std::vector<Span> spans;  // insertion order
  std::array<std::vector<std::size_t>, 3> by_level;
};

RunView view_of(const TraceSet& trace) {
  if (trace.enabled_max_level.size() != 1) {
    fail(Errc::ConfigError, "each run to merge must hold exactly one run id");
  }
  RunView v;
  v.run_id = trace.enabled_max_level.begin()->first;
  v.max_level = trace.enabled_max_level.begin()->second;
  v.spans = trace.spans_for_run(v.run_id);
  for (std::size_t i = 0; i < v.spans.size(); ++i) {
    v.by_level[static_cast<std::size_t>(v.spans[i].level)].push_back(i);
  }
  return v;
}

Nanos rescale(Nanos t, const Span& from, const Span& to) {
  const auto from_len = from.duration().count();
  if (from_len == 0) return to.start;
  const __int128 x = (t - from.start).count();
  const __int128 scaled = (x * to.duration().count() + from_len / 2) / from_len;
  return to.start + Nanos{static_cast<std::int64_t>(scaled)};
}

}  // namespace

TraceSet merge_leveled_runs(std::span<const TraceSet> runs) {
  if (runs.empty()) return {};
  if (runs.size() == 1) {
    const auto& only = runs[0];
    const auto v = view_of(only);
    TraceSet out;
    out.enable_run(v.run_id, v.max_level);
    out.spans = align_levels(only, v.run_id).spans;
    return out;
  }

  std::vector<RunView> views;
  for (const auto& r : runs) views.push_back(view_of(r));
  std::stable_sort(views.begin(), views.end(),
                   [](const RunView& a, const RunView& b) { return a.max_level < b.max_level; });

  // Workload check: every run enabling a level sees the same name sequence.
  for (std::size_t lvl = 0; lvl < 3; ++lvl) {
    const RunView* ref = nullptr;
    for (const auto& v : views) {
      if (static_cast<std::size_t>(v.max_level) < lvl) continue;
      if (!ref) {
        ref = &v;
        continue;
      }
      const auto& a = ref->by_level[lvl];
      const auto& b = v.by_level[lvl];
      const bool same = a.size() == b.size() &&
                        std::equal(a.begin(), a.end(), b.begin(), [&](std::size_t i, std::size_t j) {
                          return ref->spans[i].name == v.spans[j].name;
                        });
      if (!same) {
        fail(Errc::WorkloadMismatch,
             "runs '" + ref->run_id + "' and '" + v.run_id + "' differ at " +
                 std::string(trace_level_name(static_cast<TraceLevel>(lvl))) + " level");
      }
    }
  }

  TraceSet out;
  const auto& base = views.front();
  const auto deepest = views.back().max_level;
  out.enable_run(base.run_id, deepest);

  // merged[level] holds the output spans of that level in source order, so the
  // k-th entry matches the k-th span (same name and ordinal) of any run.
  std::array<std::vector<Span>, 3> merged;
  for (auto i : base.by_level[0]) merged[0].push_back(base.spans[i]);

  for (std::size_t lvl = 1; lvl <= static_cast<std::size_t>(deepest); ++lvl) {
    const auto& src = *std::find_if(views.begin(), views.end(), [&](const RunView& v) {
      return static_cast<std::size_t>(v.max_level) >= lvl;
    });
    const auto level = static_cast<TraceLevel>(lvl);
    const auto parent_of = containers_for(src.spans, level);

    // Position of each source parent within its level list.
    std::vector<std::size_t> ordinal(src.spans.size(), 0);
    for (std::size_t k = 0; k < src.by_level[lvl - 1].size(); ++k) {
      ordinal[src.by_level[lvl - 1][k]] = k;
    }
    for (auto i : src.by_level[lvl]) {
      Span s = src.spans[i];
      if (const auto p = parent_of[i]) {
        const auto& from = src.spans[*p];
        const auto& to = merged[lvl - 1][ordinal[*p]];
        s.start = rescale(s.start, from, to);
        s.end = rescale(s.end, from, to);
      }
      merged[lvl].push_back(std::move(s));
    }
  }

  std::set<SpanId> ids;
  bool unique = true;
  for (auto& level_spans : merged) {
    for (auto& s : level_spans) {
      s.run_id = base.run_id;
      s.parent_id.reset();
      unique = unique && ids.insert(s.span_id).second;
      out.spans.push_back(std::move(s));
    }
  }
  if (!unique) {
    for (std::size_t i = 0; i < out.spans.size(); ++i) out.spans[i].span_id = i + 1;
  }
  out.spans = align_levels(out, base.run_id).spans;
  return out;
}

std::vector<LayerTime> top_k_layers(std::span<const Span> spans, std::size_t k) {
  std::vector<std::size_t> layers;
  for (std::size_t i = 0; i < spans.size(); ++i) {
    if (spans[i].level == TraceLevel::Layer) layers.push_back(i);
  }
  std::stable_sort(layers.begin(), layers.end(), [&](std::size_t a, std::size_t b) {
    if (spans[a].duration() != spans[b].duration()) return spans[a].duration() > spans[b].duration();
    return spans[a].start < spans[b].start;
  });
  layers.resize(std::min(k, layers.size()));
  std::vector<LayerTime> out;
  for (auto i : layers) out.push_back({spans[i].name, spans[i].duration()});
  return out;
}

}  // namespace mlh
