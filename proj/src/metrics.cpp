#include "mlharness/metrics.hpp"

#include <json.hpp>

#include <algorithm>
#include <array>
#include <charconv>
#include <set>
#include <sstream>

namespace mlh {

using nlohmann::json;

namespace {

// Shortest text that reads back as the same double.
std::string exact_number(double v) {
  std::array<char, 32> buf{};
  const auto [end, ec] = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), end);
}

}  // namespace

std::string percentile_key(double p) {
  std::ostringstream os;
  os << p;
  return os.str();
}

RunReport summarize(std::span<const LatencyRecord> records, const ScenarioConfig& cfg, Nanos elapsed) {
  if (records.empty()) fail(Errc::EmptyRun, "run produced no latency records");
  RunReport r;
  r.scenario = cfg.scenario;
  r.mode = cfg.mode;
  r.seed = cfg.seed;
  r.query_count = records.size();
  r.elapsed = elapsed;
  std::vector<Nanos> latencies;
  latencies.reserve(records.size());
  Nanos max_delay{0};
  for (const auto& rec : records) {
    r.sample_count += rec.sample_count;
    r.model_time_total += rec.model_time;
    r.post_time_total += rec.post_time;
    latencies.push_back(rec.latency);
    max_delay = std::max(max_delay, rec.issue_delay);
  }
  r.throughput = elapsed.count() > 0
                     ? static_cast<double>(r.sample_count) / to_seconds(elapsed)
                     : 0.0;
  for (double p : kReportPercentiles) r.percentiles[percentile_key(p)] = percentile(latencies, p);

  if (cfg.scenario == Scenario::Server) {
    r.achieved_qps = elapsed.count() > 0
                         ? static_cast<double>(r.query_count) / to_seconds(elapsed)
                         : 0.0;
    r.max_issue_delay = max_delay;
  }
  if (cfg.scenario == Scenario::MultiStream) r.samples_per_query = cfg.samples_per_query.value_or(0);

  r.config["scenario"] = std::string(scenario_name(cfg.scenario));
  r.config["mode"] = std::string(test_mode_name(cfg.mode));
  r.config["min_query_count"] = std::to_string(cfg.min_query_count);
  r.config["min_duration_ns"] = std::to_string(cfg.min_duration.count());
  r.config["seed"] = std::to_string(cfg.seed);
  if (cfg.target_qps) r.config["target_qps"] = exact_number(*cfg.target_qps);
  if (cfg.samples_per_query) r.config["samples_per_query"] = std::to_string(*cfg.samples_per_query);
  if (cfg.offline_sample_count) {
    r.config["offline_sample_count"] = std::to_string(*cfg.offline_sample_count);
  }
  return r;
}

RunReport summarize(const RunResult& result) {
  auto r = summarize(result.records, result.config, result.elapsed);
  if (result.config.scenario == Scenario::Server && !result.arrivals.empty()) {
    const auto span = result.arrivals.back();
    r.scheduled_qps = span.count() > 0
                          ? static_cast<double>(result.arrivals.size()) / to_seconds(span)
                          : 0.0;
  }
  return r;
}

AccuracyResult top1_accuracy(std::span<const std::int64_t> predictions,
                             std::span<const std::int64_t> labels) {
  if (predictions.size() != labels.size()) {
    fail(Errc::LengthMismatch, std::to_string(predictions.size()) + " predictions for " +
                                   std::to_string(labels.size()) + " labels");
  }
  if (predictions.empty()) fail(Errc::EmptyInput, "no predictions to score");
  AccuracyResult a;
  a.total = predictions.size();
  for (std::size_t i = 0; i < predictions.size(); ++i) a.correct += predictions[i] == labels[i];
  return a;
}

namespace {

template <typename T>
std::int64_t argmax(const Tensor& t) {
  const auto v = t.values<T>();
  return static_cast<std::int64_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

template <typename T>
std::int64_t first_value(const Tensor& t) {
  return static_cast<std::int64_t>(t.values<T>()[0]);
}

}  // namespace

std::int64_t predicted_class(const TensorList& outputs) {
  if (outputs.empty()) fail(Errc::EmptyInput, "backend returned no outputs");
  const auto& t = outputs.front();
  if (element_count(t.shape()) == 0) fail(Errc::EmptyInput, "backend output is empty");
  const bool single = element_count(t.shape()) == 1;
  switch (t.dtype()) {
    case ElementType::UInt8: return single ? first_value<std::uint8_t>(t) : argmax<std::uint8_t>(t);
    case ElementType::Int8: return single ? first_value<std::int8_t>(t) : argmax<std::int8_t>(t);
    case ElementType::Int32: return single ? first_value<std::int32_t>(t) : argmax<std::int32_t>(t);
    case ElementType::Int64: return single ? first_value<std::int64_t>(t) : argmax<std::int64_t>(t);
    case ElementType::Float32: return argmax<float>(t);
    case ElementType::Float64: return argmax<double>(t);
    case ElementType::String: break;
  }
  fail(Errc::ShapeMismatch, "cannot take a class id from a string tensor");
}

AccuracyResult score_accuracy(const RunResult& result, std::span<const std::int64_t> labels) {
  std::vector<std::int64_t> predictions;
  std::vector<std::int64_t> truth;
  for (const auto& o : result.outputs) {
    if (o.sample_index >= labels.size()) {
      fail(Errc::IndexOutOfRange, "no label for sample " + std::to_string(o.sample_index));
    }
    predictions.push_back(predicted_class(o.outputs));
    truth.push_back(labels[o.sample_index]);
  }
  return top1_accuracy(predictions, truth);
}

// ---------------------------------------------------------------------------
// JSON

std::vector<std::pair<std::string, double>> headline_metrics(const RunReport& r) {
  const auto pct = [&](const char* key) {
    const auto it = r.percentiles.find(key);
    return it == r.percentiles.end() ? 0.0 : static_cast<double>(it->second.count());
  };
  switch (r.scenario) {
    case Scenario::Offline: return {{"offline_samples_per_s", r.throughput}};
    case Scenario::SingleStream: return {{"p90_ns", pct("90")}};
    case Scenario::Server: return {{"p99_ns", pct("99")}};
    case Scenario::MultiStream:
      return {{"p99_ns", pct("99")},
              {"samples_per_query", static_cast<double>(r.samples_per_query.value_or(0))}};
  }
  return {};
}

namespace {

// Nanosecond and count headlines are integers; serializing them through a
// double would drop low bits.
json headline_json(const RunReport& r, const std::string& key) {
  if (key == "offline_samples_per_s") return r.throughput;
  if (key == "samples_per_query") return r.samples_per_query.value_or(0);
  const auto it = r.percentiles.find(key == "p90_ns" ? "90" : "99");
  return it == r.percentiles.end() ? std::int64_t{0} : it->second.count();
}

}  // namespace

std::string serialize_report(const RunReport& r) {
  json j;
  j["model"] = r.model;
  j["system"] = r.system;
  j["scenario"] = scenario_name(r.scenario);
  j["mode"] = test_mode_name(r.mode);
  j["query_count"] = r.query_count;
  j["sample_count"] = r.sample_count;
  j["elapsed_ns"] = r.elapsed.count();
  j["throughput_samples_per_s"] = r.throughput;
  j["percentiles_ns"] = json::object();
  for (const auto& [k, v] : r.percentiles) j["percentiles_ns"][k] = v.count();
  if (r.achieved_qps) j["achieved_qps"] = *r.achieved_qps;
  if (r.scheduled_qps) j["scheduled_qps"] = *r.scheduled_qps;
  if (r.max_issue_delay) j["max_issue_delay_ns"] = r.max_issue_delay->count();
  j["breakdown"] = {{"model_time_total_ns", r.model_time_total.count()},
                    {"post_time_total_ns", r.post_time_total.count()}};
  if (r.accuracy) {
    j["accuracy"] = {{"correct", r.accuracy->correct},
                     {"total", r.accuracy->total},
                     {"metric", r.accuracy->metric_name},
                     {"value", r.accuracy->value()}};
  }
  j["seed"] = r.seed;
  j["config"] = r.config;
  for (const auto& [k, v] : headline_metrics(r)) j[k] = headline_json(r, k);

  return j.dump(2) + "\n";
}

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& where) {
  if (!j.is_object()) fail(Errc::ParseError, where + " must be an object");
  for (const auto& [k, v] : j.items()) {
    if (!allowed.contains(k)) fail(Errc::ParseError, "unknown key '" + k + "' in " + where);
  }
}

}  // namespace

RunReport parse_report(std::string_view text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::exception& e) {
    fail(Errc::ParseError, std::string("malformed report: ") + e.what());
  }
  RunReport r;
  try {
    check_keys(j,
               {"model", "system", "scenario", "mode", "query_count", "sample_count", "elapsed_ns",
                "throughput_samples_per_s", "percentiles_ns", "achieved_qps", "scheduled_qps",
                "max_issue_delay_ns", "breakdown", "accuracy", "seed", "config",
                "offline_samples_per_s", "p90_ns", "p99_ns", "samples_per_query"},
               "report");
    r.model = j.at("model").get<std::string>();
    r.system = j.at("system").get<std::string>();
    const auto scenario = j.at("scenario").get<std::string>();
    const auto s = scenario_from_name(scenario);
    if (!s) fail(Errc::ParseError, "unknown scenario '" + scenario + "'");
    r.scenario = *s;
    const auto mode = j.at("mode").get<std::string>();
    const auto m = test_mode_from_name(mode);
    if (!m) fail(Errc::ParseError, "unknown mode '" + mode + "'");
    r.mode = *m;
    r.query_count = j.at("query_count").get<std::uint64_t>();
    r.sample_count = j.at("sample_count").get<std::uint64_t>();
    r.elapsed = Nanos{j.at("elapsed_ns").get<std::int64_t>()};
    r.throughput = j.at("throughput_samples_per_s").get<double>();

    const auto& pct = j.at("percentiles_ns");
    std::set<std::string> pct_keys;
    for (double p : kReportPercentiles) pct_keys.insert(percentile_key(p));
    check_keys(pct, pct_keys, "percentiles_ns");
    for (const auto& k : pct_keys) r.percentiles[k] = Nanos{pct.at(k).get<std::int64_t>()};

    if (j.contains("achieved_qps")) r.achieved_qps = j["achieved_qps"].get<double>();
    if (j.contains("scheduled_qps")) r.scheduled_qps = j["scheduled_qps"].get<double>();
    if (j.contains("max_issue_delay_ns")) {
      r.max_issue_delay = Nanos{j["max_issue_delay_ns"].get<std::int64_t>()};
    }
    if (r.scenario == Scenario::MultiStream) {
      r.samples_per_query = j.at("samples_per_query").get<std::uint64_t>();
    }

    const auto& b = j.at("breakdown");
    check_keys(b, {"model_time_total_ns", "post_time_total_ns"}, "breakdown");
    r.model_time_total = Nanos{b.at("model_time_total_ns").get<std::int64_t>()};
    r.post_time_total = Nanos{b.at("post_time_total_ns").get<std::int64_t>()};

    if (j.contains("accuracy")) {
      const auto& a = j["accuracy"];
      check_keys(a, {"correct", "total", "metric", "value"}, "accuracy");
      AccuracyResult acc;
      acc.correct = a.at("correct").get<std::uint64_t>();
      acc.total = a.at("total").get<std::uint64_t>();
      acc.metric_name = a.at("metric").get<std::string>();
      if (acc.correct > acc.total) fail(Errc::ParseError, "accuracy correct exceeds total");
      r.accuracy = acc;
    }
    r.seed = j.at("seed").get<std::uint64_t>();
    r.config = j.at("config").get<std::map<std::string, std::string>>();

    // Headline keys must be exactly the scenario's, with matching values.
    std::set<std::string> headline_keys;
    for (const auto& [k, v] : headline_metrics(r)) {
      headline_keys.insert(k);
      if (!j.contains(k)) fail(Errc::ParseError, "missing headline key '" + k + "'");
      const auto expected = headline_json(r, k);
      const bool same = expected.is_number_float()
                            ? j[k].is_number() && j[k].get<double>() == v
                            : j[k].is_number_integer() && j[k] == expected;
      if (!same) fail(Errc::ParseError, "headline '" + k + "' disagrees with report");
    }
    for (const char* k : {"offline_samples_per_s", "p90_ns", "p99_ns", "samples_per_query"}) {
      if (j.contains(k) && !headline_keys.contains(k)) {
        fail(Errc::ParseError, std::string("unknown key '") + k + "' for the " + scenario + " scenario");
      }
    }
  } catch (const json::exception& e) {
    fail(Errc::ParseError, std::string("invalid report: ") + e.what());
  }
  return r;
}

// ---------------------------------------------------------------------------
// plot data

std::vector<std::pair<std::string, double>> plot_metrics(const RunReport& r) {
  std::vector<std::pair<std::string, double>> rows;
  rows.emplace_back("throughput_samples_per_s", r.throughput);
  for (double p : kReportPercentiles) {
    const auto key = percentile_key(p);
    const auto it = r.percentiles.find(key);
    rows.emplace_back("p" + key + "_ns", it == r.percentiles.end() ? 0.0 : static_cast<double>(it->second.count()));
  }
  rows.emplace_back("model_time_total_ns", static_cast<double>(r.model_time_total.count()));
  rows.emplace_back("post_time_total_ns", static_cast<double>(r.post_time_total.count()));
  if (r.scenario == Scenario::Server) {
    rows.emplace_back("achieved_qps", r.achieved_qps.value_or(0.0));
    rows.emplace_back("max_issue_delay_ns", static_cast<double>(r.max_issue_delay.value_or(Nanos{0}).count()));
  }
  if (r.scenario == Scenario::MultiStream) {
    rows.emplace_back("samples_per_query", static_cast<double>(r.samples_per_query.value_or(0)));
  }
  if (r.accuracy) rows.emplace_back(r.accuracy->metric_name + "_accuracy", r.accuracy->value());
  return rows;
}

namespace {

std::string csv_field(const std::string& s) {
  if (s.find_first_of(",\"\n") == std::string::npos) return s;
  std::string out = "\"";
  for (char c : s) {
    if (c == '"') out += '"';
    out += c;
  }
  return out + "\"";
}

}  // namespace

std::string plot_csv(std::span<const RunReport> reports) {
  std::ostringstream os;
  os.precision(17);
  os << kPlotCsvHeader << "\n";
  for (const auto& r : reports) {
    for (const auto& [metric, value] : plot_metrics(r)) {
      os << csv_field(r.model) << ',' << csv_field(r.system) << ',' << scenario_name(r.scenario) << ','
         << metric << ',' << value << "\n";
    }
  }
  return os.str();
}

}  // namespace mlh
