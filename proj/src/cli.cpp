#include "mlharness/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <iomanip>
#include <sstream>

#include "mlharness/loadgen.hpp"
#include "mlharness/manifest.hpp"
#include "mlharness/metrics.hpp"
#include "mlharness/processor.hpp"
#include "mlharness/sut.hpp"
#include "mlharness/trace.hpp"

namespace mlh {

namespace fs = std::filesystem;

namespace {

constexpr const char* kDefaultLayerPlan = "conv:0.6:0.5/0.5,fc:0.3:1,softmax:0.1:1";

struct RunOptions {
  std::string manifest;
  std::string dataset;
  std::string labels;
  std::string scenario = "single-stream";
  std::optional<double> qps;
  std::optional<std::size_t> samples_per_query;
  std::optional<std::size_t> offline_samples;
  std::uint64_t min_query_count = kDefaultMinQueryCount;
  double min_duration_ms = 10000.0;
  std::uint64_t seed = 0;
  std::string mode = "performance";
  std::string clock = "real";
  std::string trace_level = "model";
  std::string out = "report.json";
  std::string trace_out;
  std::string latency = "constant:10ms";
  std::string behavior = "identity";
  std::string layer_plan = kDefaultLayerPlan;
  std::string span_overhead = "0ns";
  std::string system = "simulated";
  std::optional<std::size_t> num_classes;
  std::size_t max_concurrency = 1;
  std::string cache_dir = ".mlharness-cache";
  std::string worker;
};

struct ReportOptions {
  std::vector<std::string> traces;
  std::size_t top_k = 3;
  std::string csv;
};

struct PlotOptions {
  std::vector<std::string> reports;
  std::string out;
};

struct GenOptions {
  std::string out;
  std::string labels_out;
  std::size_t count = 64;
  std::uint64_t height = 32;
  std::uint64_t width = 32;
  std::uint64_t channels = 3;
  std::size_t num_classes = 10;
  std::uint64_t seed = 0;
};

int exit_code_for(Errc code) {
  switch (code) {
    case Errc::SyntaxError:
    case Errc::ValidationError:
    case Errc::ParseError:
    case Errc::FormatError:
    case Errc::ConfigError:
      return kExitValidation;
    case Errc::ChecksumMismatch:
      return kExitChecksum;
    default:
      return kExitRuntime;
  }
}

void print_error(std::ostream& err, std::string_view code, std::string_view message) {
  nlohmann::json j;
  j["error"] = code;
  j["message"] = message;
  err << j.dump() << "\n";
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::IoError, "cannot read " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const fs::path& path, const std::string& text) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out << text;
  if (!out) fail(Errc::IoError, "cannot write " + path.string());
}

template <typename T>
T parse_choice(std::optional<T> value, std::string_view flag, std::string_view text) {
  if (!value) fail(Errc::ConfigError, "bad " + std::string(flag) + " '" + std::string(text) + "'");
  return *value;
}

std::string format_ms(Nanos d) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(3) << static_cast<double>(d.count()) / 1e6;
  return os.str();
}

int cmd_run(const RunOptions& o, std::ostream& out) {
  // Flags first, so nothing starts on a bad configuration.
  ScenarioConfig cfg;
  cfg.scenario = parse_choice(scenario_from_name(o.scenario), "--scenario", o.scenario);
  cfg.mode = parse_choice(test_mode_from_name(o.mode), "--mode", o.mode);
  cfg.seed = o.seed;
  cfg.min_query_count = o.min_query_count;
  if (!(o.min_duration_ms >= 0.0)) fail(Errc::ConfigError, "--min-duration-ms must be non-negative");
  cfg.min_duration = Nanos{std::llround(o.min_duration_ms * 1e6)};
  if (cfg.scenario == Scenario::Server) {
    if (!o.qps) fail(Errc::ConfigError, "server scenario needs --qps");
    cfg.target_qps = *o.qps;
  }
  if (cfg.scenario == Scenario::MultiStream) {
    if (!o.samples_per_query) fail(Errc::ConfigError, "multistream scenario needs --samples-per-query");
    cfg.samples_per_query = *o.samples_per_query;
  }
  if (o.clock != "real" && o.clock != "virtual") fail(Errc::ConfigError, "bad --clock '" + o.clock + "'");
  const auto level = parse_choice(trace_level_from_name(o.trace_level), "--trace-level", o.trace_level);

  SimulatedBackendConfig backend_cfg;
  backend_cfg.latency = LatencyModel::parse(o.latency);
  backend_cfg.behavior = BackendBehavior::parse(o.behavior);
  backend_cfg.layer_plan = parse_layer_plan(o.layer_plan);
  backend_cfg.profiling_overhead_per_span = parse_duration(o.span_overhead);
  backend_cfg.seed = o.seed;
  backend_cfg.emit_level = level;
  backend_cfg.max_concurrency = o.max_concurrency;

  const fs::path manifest_path = o.manifest;
  std::vector<std::string> warnings;
  const auto manifest = parse_manifest(read_text(manifest_path), &warnings);
  backend_cfg.model_name = manifest.name;

  auto samples = read_dataset(o.dataset);
  std::optional<std::vector<std::int64_t>> labels;
  if (!o.labels.empty()) labels = read_labels(o.labels);
  if (cfg.scenario == Scenario::Offline) cfg.offline_sample_count = o.offline_samples.value_or(samples.size());
  cfg.validate();
  if (cfg.mode == TestMode::Accuracy && !labels) fail(Errc::ConfigError, "accuracy mode needs --labels");
  if (backend_cfg.behavior.kind != BackendBehavior::Kind::Identity) {
    if (!labels) fail(Errc::ConfigError, "--behavior " + o.behavior + " needs --labels");
    backend_cfg.label_table = *labels;
    std::int64_t max_label = -1;
    for (auto l : *labels) max_label = std::max(max_label, l);
    backend_cfg.num_classes = o.num_classes.value_or(static_cast<std::size_t>(max_label + 1));
  }
  backend_cfg.validate();

  const auto base_dir = manifest_path.has_parent_path() ? manifest_path.parent_path() : fs::path(".");
  resolve_model_source(manifest.model_source, o.cache_dir, curl_fetch, base_dir);

  std::unique_ptr<Pipeline> pipeline;
  if (!o.worker.empty() && manifest.uses_external_processing()) {
    pipeline = make_external_pipeline(o.worker, manifest.hook_ctx());
  } else {
    pipeline = make_pipeline(manifest);
  }

  VirtualClock virtual_clock;
  Clock& clock = o.clock == "virtual" ? static_cast<Clock&>(virtual_clock) : steady_clock();

  const auto run_id = manifest.name + "/" + std::string(scenario_name(cfg.scenario));
  TraceRecorder recorder;
  recorder.enable_run(run_id, level);
  SimulatedBackend backend(backend_cfg);
  const auto sample_count = samples.size();
  DatasetStore store(std::move(samples), labels);
  Sut sut(store, *pipeline, backend, &recorder, run_id);

  pipeline->start(clock);
  const auto result = run_scenario(cfg, sut, clock);
  pipeline->stop(clock);

  auto report = summarize(result);
  report.model = manifest.name;
  report.system = o.system;
  if (cfg.mode == TestMode::Accuracy) report.accuracy = score_accuracy(result, *labels);
  report.config["manifest"] = o.manifest;
  report.config["dataset"] = o.dataset;
  report.config["dataset_samples"] = std::to_string(sample_count);
  if (!o.labels.empty()) report.config["labels"] = o.labels;
  report.config["clock"] = o.clock;
  report.config["trace_level"] = o.trace_level;
  report.config["backend"] = backend.describe();
  report.config["layer_plan"] = o.layer_plan;
  report.config["span_overhead"] = o.span_overhead;
  report.config["model_version"] = manifest.version;
  report.config["preprocess_ns"] = std::to_string(result.preprocess_time.count());

  write_text(o.out, serialize_report(report));
  if (!o.trace_out.empty()) write_text(o.trace_out, serialize_trace(recorder.snapshot(), run_id));

  for (const auto& w : warnings) out << "warning: " << w << "\n";
  out << scenario_name(report.scenario) << ": " << report.query_count << " queries, "
      << report.sample_count << " samples in " << format_ms(report.elapsed) << " ms\n";
  out << std::setprecision(15);
  for (const auto& [k, v] : headline_metrics(report)) out << "  " << k << " = " << v << "\n";
  if (report.accuracy) {
    out << "  top1 = " << report.accuracy->correct << "/" << report.accuracy->total << "\n";
  }
  out << "report written to " << o.out << "\n";
  return kExitOk;
}

int cmd_validate(const std::string& path, std::ostream& out) {
  std::vector<std::string> warnings;
  const auto m = parse_manifest(read_text(path), &warnings);
  for (const auto& w : warnings) out << "warning: " << w << "\n";
  out << "ok: " << m.name << " " << m.version << " ("
      << (m.uses_external_processing() ? "external processing" : "built-in steps") << ")\n";
  return kExitOk;
}

int cmd_report(const ReportOptions& o, std::ostream& out) {
  if (o.traces.empty()) fail(Errc::ConfigError, "report needs at least one --trace");
  std::vector<TraceSet> runs;
  for (const auto& path : o.traces) runs.push_back(parse_trace(read_text(path)));
  const auto merged = merge_leveled_runs(runs);
  const auto& run_id = merged.enabled_max_level.begin()->first;
  const auto hierarchy = align_levels(merged, run_id);

  std::array<std::size_t, 3> per_level{};
  for (const auto& s : hierarchy.spans) ++per_level[static_cast<std::size_t>(s.level)];
  out << "run " << run_id << ": " << hierarchy.spans.size() << " spans (model " << per_level[0]
      << ", layer " << per_level[1] << ", kernel " << per_level[2] << "), "
      << hierarchy.orphans.size() << " orphans\n";

  const auto top = top_k_layers(hierarchy.spans, o.top_k);
  out << "rank  layer  latency_ms\n";
  for (std::size_t i = 0; i < top.size(); ++i) {
    out << (i + 1) << "  " << top[i].name << "  " << format_ms(top[i].duration) << "\n";
  }
  if (!o.csv.empty()) {
    std::ostringstream csv;
    csv << "rank,layer,duration_ns\n";
    for (std::size_t i = 0; i < top.size(); ++i) {
      csv << (i + 1) << "," << top[i].name << "," << top[i].duration.count() << "\n";
    }
    write_text(o.csv, csv.str());
  }
  return kExitOk;
}

int cmd_plotdata(const PlotOptions& o, std::ostream& out) {
  std::vector<RunReport> reports;
  for (const auto& path : o.reports) reports.push_back(parse_report(read_text(path)));
  const auto csv = plot_csv(reports);
  if (o.out.empty()) {
    out << csv;
  } else {
    write_text(o.out, csv);
  }
  return kExitOk;
}

int cmd_gen_dataset(const GenOptions& o, std::ostream& out) {
  const auto ds = generate_synthetic_dataset(o.count, o.height, o.width, o.channels, o.num_classes, o.seed);
  write_dataset(o.out, ds.samples);
  if (!o.labels_out.empty()) write_labels(o.labels_out, ds.labels);
  out << "wrote " << o.count << " samples of " << o.height << "x" << o.width << "x" << o.channels
      << " to " << o.out << "\n";
  return kExitOk;
}

}  // namespace

int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err) {
  CLI::App app{"mlharness: manifest-driven inference benchmarking harness"};
  app.require_subcommand(1);

  RunOptions run;
  auto* run_cmd = app.add_subcommand("run", "Run a scenario against the simulated backend");
  run_cmd->add_option("--manifest", run.manifest, "Model manifest (YAML)")->required();
  run_cmd->add_option("--dataset", run.dataset, "Dataset file")->required();
  run_cmd->add_option("--labels", run.labels, "Labels file (i64 per sample)");
  run_cmd->add_option("--scenario", run.scenario, "offline|single-stream|server|multistream");
  run_cmd->add_option("--qps", run.qps, "Server target queries per second");
  run_cmd->add_option("--samples-per-query", run.samples_per_query, "Multistream query size");
  run_cmd->add_option("--offline-samples", run.offline_samples, "Offline query size (default: all)");
  run_cmd->add_option("--min-query-count", run.min_query_count, "Minimum number of queries");
  run_cmd->add_option("--min-duration-ms", run.min_duration_ms, "Minimum run duration");
  run_cmd->add_option("--seed", run.seed, "Seed for all random streams");
  run_cmd->add_option("--mode", run.mode, "performance|accuracy");
  run_cmd->add_option("--clock", run.clock, "real|virtual");
  run_cmd->add_option("--trace-level", run.trace_level, "model|layer|kernel");
  run_cmd->add_option("--out", run.out, "Report path");
  run_cmd->add_option("--trace-out", run.trace_out, "Trace path");
  run_cmd->add_option("--latency", run.latency, "constant:D | uniform:A:B | exponential:MEAN");
  run_cmd->add_option("--behavior", run.behavior, "identity | lookup_label | corrupted_lookup:RATE");
  run_cmd->add_option("--layer-plan", run.layer_plan, "name:fraction[:k1/k2],...");
  run_cmd->add_option("--span-overhead", run.span_overhead, "Time charged per layer/kernel span");
  run_cmd->add_option("--system", run.system, "System name recorded in the report");
  run_cmd->add_option("--num-classes", run.num_classes, "Class count for lookup behaviors");
  run_cmd->add_option("--max-concurrency", run.max_concurrency, "Backend lanes (server scenario)");
  run_cmd->add_option("--cache-dir", run.cache_dir, "Download cache for remote model graphs");
  run_cmd->add_option("--worker", run.worker, "Override the manifest's worker command");

  std::string validate_path;
  auto* validate_cmd = app.add_subcommand("validate", "Validate a manifest");
  validate_cmd->add_option("--manifest", validate_path, "Model manifest (YAML)")->required();

  ReportOptions report;
  auto* report_cmd = app.add_subcommand("report", "Align a trace and list the slowest layers");
  report_cmd->add_option("--trace", report.traces, "Trace file; several are merged by level")->required();
  report_cmd->add_option("--top-k", report.top_k, "Number of layers to list");
  report_cmd->add_option("--csv", report.csv, "Also write the table as CSV");

  PlotOptions plot;
  auto* plot_cmd = app.add_subcommand("plotdata", "Emit CSV rows from report files");
  plot_cmd->add_option("--report", plot.reports, "Report file (repeatable)");
  plot_cmd->add_option("--out", plot.out, "CSV path (default: stdout)");

  GenOptions gen;
  auto* gen_cmd = app.add_subcommand("gen-dataset", "Write a synthetic image dataset");
  gen_cmd->add_option("--out", gen.out, "Dataset path")->required();
  gen_cmd->add_option("--labels-out", gen.labels_out, "Labels path");
  gen_cmd->add_option("--count", gen.count, "Number of samples");
  gen_cmd->add_option("--height", gen.height, "Image height");
  gen_cmd->add_option("--width", gen.width, "Image width");
  gen_cmd->add_option("--channels", gen.channels, "Image channels");
  gen_cmd->add_option("--num-classes", gen.num_classes, "Label range");
  gen_cmd->add_option("--seed", gen.seed, "Seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    print_error(err, "UsageError", e.what());
    return kExitValidation;
  }

  try {
    if (run_cmd->parsed()) return cmd_run(run, out);
    if (validate_cmd->parsed()) return cmd_validate(validate_path, out);
    if (report_cmd->parsed()) return cmd_report(report, out);
    if (plot_cmd->parsed()) return cmd_plotdata(plot, out);
    if (gen_cmd->parsed()) return cmd_gen_dataset(gen, out);
  } catch (const Error& e) {
    print_error(err, errc_name(e.code()), e.what());
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    print_error(err, "InternalError", e.what());
    return kExitRuntime;
  }
  return kExitValidation;
}

}  // namespace mlh
