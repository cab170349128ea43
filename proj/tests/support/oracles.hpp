#pragma once

// Reference implementations written independently of the library code they
// check.

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

#include "mlharness/frame.hpp"
#include "mlharness/tensor.hpp"
#include "mlharness/trace.hpp"
#include "test_support.hpp"

namespace mlh::test {

// One output element of decode -> center crop -> bilinear resize ->
// (x - mean) / rescale, as an explicit four-tap weighted sum over the raw HWC
// uint8 bytes. Keep-aspect padding is black before normalization.
inline double oracle_pixel(const Tensor& raw, double pct, std::uint64_t oh, std::uint64_t ow, bool keep,
                           double mean, double rescale, std::uint64_t y, std::uint64_t x, std::uint64_t k) {
  const auto H = raw.shape()[0], W = raw.shape()[1], C = raw.shape()[2];
  const auto ch = static_cast<std::uint64_t>(std::floor(H * pct / 100.0));
  const auto cw = static_cast<std::uint64_t>(std::floor(W * pct / 100.0));
  const auto top = (H - ch) / 2, left = (W - cw) / 2;
  std::uint64_t rh = oh, rw = ow, py = 0, px = 0;
  if (keep) {
    const double s = std::min(double(oh) / double(ch), double(ow) / double(cw));
    rh = std::clamp<std::uint64_t>(static_cast<std::uint64_t>(std::floor(ch * s + 0.5)), 1, oh);
    rw = std::clamp<std::uint64_t>(static_cast<std::uint64_t>(std::floor(cw * s + 0.5)), 1, ow);
    py = (oh - rh) / 2;
    px = (ow - rw) / 2;
  }
  double v = 0.0;
  if (y >= py && y < py + rh && x >= px && x < px + rw) {
    const auto ry = y - py, rx = x - px;
    double sy = (ry + 0.5) * double(ch) / double(rh) - 0.5;
    double sx = (rx + 0.5) * double(cw) / double(rw) - 0.5;
    sy = std::min(std::max(sy, 0.0), double(ch - 1));
    sx = std::min(std::max(sx, 0.0), double(cw - 1));
    const auto y0 = static_cast<std::uint64_t>(std::floor(sy));
    const auto x0 = static_cast<std::uint64_t>(std::floor(sx));
    const auto y1 = std::min(y0 + 1, ch - 1), x1 = std::min(x0 + 1, cw - 1);
    const double ay = sy - y0, ax = sx - x0;
    const auto at = [&](std::uint64_t yy, std::uint64_t xx) {
      return double(raw.bytes()[((top + yy) * W + left + xx) * C + k]);
    };
    v = (1 - ay) * (1 - ax) * at(y0, x0) + (1 - ay) * ax * at(y0, x1) + ay * (1 - ax) * at(y1, x0) +
        ay * ax * at(y1, x1);
  }
  return (v - mean) / rescale;
}

inline Tensor random_image(std::mt19937_64& rng, std::uint64_t h, std::uint64_t w, std::uint64_t c) {
  std::vector<std::uint8_t> px(h * w * c);
  for (auto& p : px) p = static_cast<std::uint8_t>(rng());
  return Tensor::from_bytes(ElementType::UInt8, {h, w, c}, std::move(px));
}

// Quadratic parent search: the shortest containing span one level up, the
// earliest recorded among equals.
inline std::optional<SpanId> oracle_parent(const std::vector<Span>& run_spans, const Span& child) {
  std::optional<std::size_t> best;
  for (std::size_t j = 0; j < run_spans.size(); ++j) {
    const auto& p = run_spans[j];
    if (static_cast<int>(p.level) != static_cast<int>(child.level) - 1) continue;
    if (p.start > child.start || p.end < child.end) continue;
    if (!best || p.duration() < run_spans[*best].duration()) best = j;
  }
  if (!best) return std::nullopt;
  return run_spans[*best].span_id;
}

// Random spans over a small horizon so containment ties and orphans are common.
inline TraceSet random_trace(std::mt19937_64& rng) {
  TraceSet t;
  t.enable_run("a", TraceLevel::Kernel);
  t.enable_run("b", TraceLevel::Kernel);
  const int n = 1 + static_cast<int>(rng() % 40);
  const std::int64_t horizon = 5 + static_cast<std::int64_t>(rng() % 60);
  for (int i = 0; i < n; ++i) {
    Span s;
    s.span_id = static_cast<SpanId>(i + 1);
    s.run_id = rng() % 4 ? "a" : "b";
    s.level = static_cast<TraceLevel>(rng() % 3);
    s.name = "s" + std::to_string(i);
    s.start = Nanos{static_cast<std::int64_t>(rng() % horizon)};
    s.end = s.start + Nanos{static_cast<std::int64_t>(rng() % (horizon / 2 + 1))};
    record_span(t, std::move(s));
  }
  return t;
}

// Conformance vectors packed by tests/conformance/generate_vectors.py.
struct ConformanceVector {
  std::string file;
  std::vector<std::uint8_t> bytes;
  Frame expected;
};

struct InvalidVector {
  std::string file;
  std::vector<std::uint8_t> bytes;
  std::string error;
};

inline std::vector<std::uint8_t> from_hex(const std::string& hex) {
  std::vector<std::uint8_t> out;
  for (std::size_t i = 0; i + 1 < hex.size(); i += 2) {
    out.push_back(static_cast<std::uint8_t>(std::stoi(hex.substr(i, 2), nullptr, 16)));
  }
  return out;
}

inline nlohmann::json conformance_index() {
  return nlohmann::json::parse(read_text(source_dir() / "tests/conformance/vectors.json"));
}

inline std::vector<ConformanceVector> valid_vectors() {
  std::vector<ConformanceVector> out;
  const auto index = conformance_index();
  for (const auto& v : index.at("valid")) {
    ConformanceVector c;
    c.file = v.at("file").get<std::string>();
    c.bytes = read_bytes(source_dir() / "tests/conformance" / c.file);
    for (const auto& t : v.at("tensors")) {
      const auto dtype = *element_type_from_name(t.at("dtype").get<std::string>());
      const auto shape = t.at("shape").get<Shape>();
      if (dtype == ElementType::String) {
        c.expected.tensors.push_back(Tensor::from_strings(shape, t.at("strings").get<std::vector<std::string>>()));
      } else {
        c.expected.tensors.push_back(Tensor::from_bytes(dtype, shape, from_hex(t.at("data_hex"))));
      }
    }
    for (const auto& [k, val] : v.at("ctx").items()) c.expected.ctx[k] = val.get<std::string>();
    c.expected.hook = *hook_from_code(v.at("hook").get<std::uint8_t>());
    out.push_back(std::move(c));
  }
  return out;
}

inline std::vector<InvalidVector> invalid_vectors() {
  std::vector<InvalidVector> out;
  const auto index = conformance_index();
  for (const auto& v : index.at("invalid")) {
    InvalidVector c;
    c.file = v.at("file").get<std::string>();
    c.bytes = read_bytes(source_dir() / "tests/conformance" / c.file);
    c.error = v.at("error").get<std::string>();
    out.push_back(std::move(c));
  }
  return out;
}

}  // namespace mlh::test
