#include <algorithm>
#include <charconv>
#include <cmath>
#include <numeric>
#include <sstream>

#include "mlharness/sut.hpp"

namespace mlh {

namespace {

std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find(sep, start);
    out.push_back(s.substr(start, pos - start));
    if (pos == std::string_view::npos) return out;
    start = pos + 1;
  }
}

double parse_double(std::string_view s, std::string_view what) {
  double v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (s.empty() || ec != std::errc{} || ptr != s.data() + s.size()) {
    fail(Errc::ConfigError, "bad " + std::string(what) + " '" + std::string(s) + "'");
  }
  return v;
}

std::string format_duration(Nanos d) { return std::to_string(d.count()) + "ns"; }

// Cumulative boundaries of `fractions` over [start, start + length]; the last
// boundary is exactly start + length.
std::vector<Nanos> boundaries(Nanos start, Nanos length, std::span<const double> fractions) {
  std::vector<Nanos> out{start};
  double cum = 0;
  for (std::size_t i = 0; i < fractions.size(); ++i) {
    cum += fractions[i];
    out.push_back(i + 1 == fractions.size()
                      ? start + length
                      : start + Nanos{std::llround(static_cast<double>(length.count()) * cum)});
  }
  return out;
}

void check_fractions(std::span<const double> fractions, const std::string& what) {
  if (fractions.empty()) return;
  double sum = 0;
  for (double f : fractions) {
    if (!(f >= 0.0)) fail(Errc::ConfigError, what + " fractions must be non-negative");
    sum += f;
  }
  if (std::abs(sum - 1.0) > 1e-9) {
    fail(Errc::ConfigError, what + " fractions sum to " + std::to_string(sum) + ", not 1");
  }
}

}  // namespace

Nanos parse_duration(std::string_view s) {
  struct Unit {
    std::string_view suffix;
    double scale;
  };
  static constexpr Unit kUnits[] = {{"ns", 1.0}, {"us", 1e3}, {"ms", 1e6}, {"s", 1e9}};
  for (const auto& u : kUnits) {
    if (s.size() > u.suffix.size() && s.ends_with(u.suffix)) {
      const auto number = s.substr(0, s.size() - u.suffix.size());
      // "ms" also ends with "s"; the table order keeps the longest match first.
      const double v = parse_double(number, "duration");
      if (v < 0) fail(Errc::ConfigError, "negative duration '" + std::string(s) + "'");
      return Nanos{std::llround(v * u.scale)};
    }
  }
  fail(Errc::ConfigError, "duration needs a unit (ns, us, ms, s): '" + std::string(s) + "'");
}

LatencyModel LatencyModel::parse(std::string_view text) {
  const auto parts = split(text, ':');
  if (parts[0] == "constant" && parts.size() == 2) return constant(parse_duration(parts[1]));
  if (parts[0] == "uniform" && parts.size() == 3) {
    const auto lo = parse_duration(parts[1]);
    const auto hi = parse_duration(parts[2]);
    if (hi < lo) fail(Errc::ConfigError, "uniform latency needs lo <= hi");
    return uniform(lo, hi);
  }
  if (parts[0] == "exponential" && parts.size() == 2) return exponential(parse_duration(parts[1]));
  fail(Errc::ConfigError, "unknown latency model '" + std::string(text) +
                              "' (constant:D, uniform:A:B, exponential:MEAN)");
}

std::string LatencyModel::describe() const {
  switch (kind) {
    case Kind::Constant: return "constant:" + format_duration(a);
    case Kind::Uniform: return "uniform:" + format_duration(a) + ":" + format_duration(b);
    case Kind::Exponential: return "exponential:" + format_duration(a);
  }
  return {};
}

Nanos LatencyModel::draw(Rng& rng) const {
  switch (kind) {
    case Kind::Constant:
      return a;
    case Kind::Uniform: {
      const auto span = static_cast<double>((b - a).count());
      return a + Nanos{static_cast<std::int64_t>(std::floor(rng.uniform01() * (span + 1.0)))};
    }
    case Kind::Exponential:
      return Nanos{std::llround(rng.exponential(static_cast<double>(a.count())))};
  }
  return a;
}

BackendBehavior BackendBehavior::parse(std::string_view text) {
  if (text == "identity") return {Kind::Identity, 0.0};
  if (text == "lookup_label") return {Kind::LookupLabel, 0.0};
  const auto parts = split(text, ':');
  if (parts[0] == "corrupted_lookup" && parts.size() == 2) {
    const double rate = parse_double(parts[1], "error rate");
    if (!(rate >= 0.0 && rate <= 1.0)) fail(Errc::ConfigError, "error rate must be in [0, 1]");
    return {Kind::CorruptedLookup, rate};
  }
  fail(Errc::ConfigError, "unknown backend behavior '" + std::string(text) +
                              "' (identity, lookup_label, corrupted_lookup:RATE)");
}

std::string BackendBehavior::describe() const {
  switch (kind) {
    case Kind::Identity: return "identity";
    case Kind::LookupLabel: return "lookup_label";
    case Kind::CorruptedLookup: {
      std::ostringstream os;
      os << "corrupted_lookup:" << error_rate;
      return os.str();
    }
  }
  return {};
}

std::vector<LayerPlanEntry> parse_layer_plan(std::string_view text) {
  std::vector<LayerPlanEntry> plan;
  if (text.empty()) return plan;
  for (auto item : split(text, ',')) {
    const auto parts = split(item, ':');
    if (parts.size() < 2 || parts.size() > 3 || parts[0].empty()) {
      fail(Errc::ConfigError, "layer plan entry must be name:fraction[:k1/k2/...], got '" +
                                  std::string(item) + "'");
    }
    LayerPlanEntry e{std::string(parts[0]), parse_double(parts[1], "layer fraction"), {}};
    if (parts.size() == 3) {
      for (auto k : split(parts[2], '/')) e.kernel_fractions.push_back(parse_double(k, "kernel fraction"));
    }
    check_fractions(e.kernel_fractions, "kernel (layer '" + e.name + "')");
    plan.push_back(std::move(e));
  }
  std::vector<double> fractions;
  for (const auto& e : plan) fractions.push_back(e.fraction);
  check_fractions(fractions, "layer");
  return plan;
}

void SimulatedBackendConfig::validate() const {
  std::vector<double> layer_fractions;
  for (const auto& l : layer_plan) {
    layer_fractions.push_back(l.fraction);
    check_fractions(l.kernel_fractions, "kernel (layer '" + l.name + "')");
  }
  check_fractions(layer_fractions, "layer");
  if (max_concurrency == 0) fail(Errc::ConfigError, "max_concurrency must be positive");
  if (latency.a < Nanos{0} || latency.b < Nanos{0}) fail(Errc::ConfigError, "negative latency");
  if (behavior.kind != BackendBehavior::Kind::Identity) {
    if (num_classes == 0) fail(Errc::ConfigError, "lookup behaviors need num_classes > 0");
    for (auto l : label_table) {
      if (l < 0 || static_cast<std::size_t>(l) >= num_classes) {
        fail(Errc::ConfigError, "label " + std::to_string(l) + " outside [0, num_classes)");
      }
    }
  }
}

std::string SimulatedBackendConfig::describe() const {
  std::ostringstream os;
  os << "simulated{latency=" << latency.describe() << ", behavior=" << behavior.describe()
     << ", seed=" << seed << ", layers=" << layer_plan.size()
     << ", max_concurrency=" << max_concurrency << "}";
  return os.str();
}

namespace {

struct Draw {
  Nanos latency{0};
  bool corrupt = false;
};

Draw draw_once(const SimulatedBackendConfig& cfg, SimulatedRng& rng) {
  Draw d{cfg.latency.draw(rng.latency), false};
  if (cfg.behavior.kind == BackendBehavior::Kind::CorruptedLookup) {
    d.corrupt = rng.corruption.uniform01() < cfg.behavior.error_rate;
  }
  return d;
}

InferResult infer_with(const SimulatedBackendConfig& cfg, const TensorList& inputs,
                       std::size_t sample_index, Clock& clock, Draw d) {
  const bool layers = cfg.emit_level >= TraceLevel::Layer;
  const bool kernels = cfg.emit_level >= TraceLevel::Kernel;
  std::size_t extra_spans = 0;
  if (layers) {
    for (const auto& l : cfg.layer_plan) extra_spans += 1 + (kernels ? l.kernel_fractions.size() : 0);
  }
  const auto total = d.latency + cfg.profiling_overhead_per_span * static_cast<std::int64_t>(extra_spans);

  InferResult result;
  const auto t0 = clock.now();
  result.spans.push_back({0, {}, TraceLevel::Model, cfg.model_name, t0, t0 + total, {}, {}});
  if (layers && !cfg.layer_plan.empty()) {
    std::vector<double> fractions;
    for (const auto& l : cfg.layer_plan) fractions.push_back(l.fraction);
    const auto bounds = boundaries(t0, total, fractions);
    for (std::size_t i = 0; i < cfg.layer_plan.size(); ++i) {
      const auto& layer = cfg.layer_plan[i];
      result.spans.push_back({0, {}, TraceLevel::Layer, layer.name, bounds[i], bounds[i + 1], {}, {}});
      if (!kernels || layer.kernel_fractions.empty()) continue;
      const auto kb = boundaries(bounds[i], bounds[i + 1] - bounds[i], layer.kernel_fractions);
      for (std::size_t k = 0; k < layer.kernel_fractions.size(); ++k) {
        result.spans.push_back({0, {}, TraceLevel::Kernel,
                                layer.name + "/kernel" + std::to_string(k), kb[k], kb[k + 1], {}, {}});
      }
    }
  }
  clock.sleep_until(t0 + total);

  if (cfg.behavior.kind == BackendBehavior::Kind::Identity) {
    result.outputs = inputs;
    return result;
  }
  if (sample_index >= cfg.label_table.size()) {
    fail(Errc::IndexOutOfRange, "no label for sample " + std::to_string(sample_index));
  }
  auto label = static_cast<std::size_t>(cfg.label_table[sample_index]);
  if (d.corrupt) label = (label + 1) % cfg.num_classes;
  Tensor logits(ElementType::Float32, {1, cfg.num_classes});
  logits.mutable_values<float>()[label] = 1.0f;
  result.outputs.push_back(std::move(logits));
  return result;
}

}  // namespace

InferResult simulated_infer(const SimulatedBackendConfig& cfg, const TensorList& inputs,
                            std::size_t sample_index, Clock& clock, SimulatedRng& rng) {
  return infer_with(cfg, inputs, sample_index, clock, draw_once(cfg, rng));
}

SimulatedBackend::SimulatedBackend(SimulatedBackendConfig cfg)
    : cfg_(std::move(cfg)), rng_(cfg_.seed) {
  cfg_.validate();
}

InferResult SimulatedBackend::infer(const TensorList& inputs, const InferContext& ctx) {
  // Draw under the lock, sleep outside it so concurrent queries overlap.
  Draw d;
  {
    std::lock_guard lock(rng_mu_);
    d = draw_once(cfg_, rng_);
  }
  return infer_with(cfg_, inputs, ctx.sample_index, ctx.clock, d);
}

}  // namespace mlh
