#include <json.hpp>

#include "mlharness/trace.hpp"

namespace mlh {

using nlohmann::json;

std::string serialize_trace(const TraceSet& trace, std::string_view run_id) {
  const auto it = trace.enabled_max_level.find(run_id);
  if (it == trace.enabled_max_level.end()) {
    fail(Errc::LevelDisabled, "unknown run '" + std::string(run_id) + "'");
  }
  json spans = json::array();
  for (const auto& s : trace.spans) {
    if (s.run_id != run_id) continue;
    json j;
    j["span_id"] = s.span_id;
    j["run_id"] = s.run_id;
    j["level"] = trace_level_name(s.level);
    j["name"] = s.name;
    j["start"] = s.start.count();
    j["end"] = s.end.count();
    j["parent_id"] = s.parent_id ? json(*s.parent_id) : json(nullptr);
    j["attributes"] = json::object();
    for (const auto& [k, v] : s.attributes) j["attributes"][k] = v;
    spans.push_back(std::move(j));
  }
  json doc;
  doc["run_id"] = run_id;
  doc["enabled_max_level"] = trace_level_name(it->second);
  doc["spans"] = std::move(spans);
  return doc.dump(2) + "\n";
}

namespace {

TraceLevel level_field(const json& j, const char* key) {
  const auto name = j.at(key).get<std::string>();
  auto level = trace_level_from_name(name);
  if (!level) fail(Errc::ParseError, "unknown trace level '" + name + "'");
  return *level;
}

}  // namespace

TraceSet parse_trace(std::string_view text) {
  json doc;
  try {
    doc = json::parse(text);
  } catch (const json::exception& e) {
    fail(Errc::ParseError, std::string("malformed trace: ") + e.what());
  }
  TraceSet trace;
  try {
    const auto run_id = doc.at("run_id").get<std::string>();
    trace.enable_run(run_id, level_field(doc, "enabled_max_level"));
    for (const auto& j : doc.at("spans")) {
      Span s;
      s.span_id = j.at("span_id").get<SpanId>();
      s.run_id = j.at("run_id").get<std::string>();
      s.level = level_field(j, "level");
      s.name = j.at("name").get<std::string>();
      s.start = Nanos{j.at("start").get<std::int64_t>()};
      s.end = Nanos{j.at("end").get<std::int64_t>()};
      if (j.contains("parent_id") && !j["parent_id"].is_null()) {
        s.parent_id = j["parent_id"].get<SpanId>();
      }
      if (j.contains("attributes")) {
        for (const auto& [k, v] : j["attributes"].items()) s.attributes[k] = v.get<std::string>();
      }
      if (s.run_id != run_id) fail(Errc::ParseError, "span run id does not match document");
      record_span(trace, std::move(s));
    }
  } catch (const json::exception& e) {
    fail(Errc::ParseError, std::string("inconsistent trace: ") + e.what());
  } catch (const Error& e) {
    if (e.code() == Errc::ParseError) throw;
    fail(Errc::ParseError, std::string("inconsistent trace: ") + e.what());
  }
  return trace;
}

}  // namespace mlh
