#include "mlharness/loadgen.hpp"

#include <algorithm>
#include <cmath>
#include <condition_variable>
#include <deque>
#include <exception>
#include <numeric>
#include <queue>
#include <thread>

namespace mlh {

std::string_view scenario_name(Scenario s) noexcept {
  switch (s) {
    case Scenario::Offline: return "offline";
    case Scenario::SingleStream: return "single-stream";
    case Scenario::Server: return "server";
    case Scenario::MultiStream: return "multistream";
  }
  return "single-stream";
}

std::optional<Scenario> scenario_from_name(std::string_view name) noexcept {
  for (auto s : {Scenario::Offline, Scenario::SingleStream, Scenario::Server, Scenario::MultiStream}) {
    if (scenario_name(s) == name) return s;
  }
  return std::nullopt;
}

std::string_view test_mode_name(TestMode m) noexcept {
  return m == TestMode::Accuracy ? "accuracy" : "performance";
}

std::optional<TestMode> test_mode_from_name(std::string_view name) noexcept {
  if (name == "performance") return TestMode::Performance;
  if (name == "accuracy") return TestMode::Accuracy;
  return std::nullopt;
}

void ScenarioConfig::validate() const {
  const auto need = [&](bool present, bool required, const char* field) {
    if (present && !required) {
      fail(Errc::ConfigError, std::string(field) + " does not apply to the " +
                                  std::string(scenario_name(scenario)) + " scenario");
    }
    if (!present && required) {
      fail(Errc::ConfigError, std::string(scenario_name(scenario)) + " needs " + field);
    }
  };
  need(target_qps.has_value(), scenario == Scenario::Server, "target_qps");
  need(samples_per_query.has_value(), scenario == Scenario::MultiStream, "samples_per_query");
  need(offline_sample_count.has_value(), scenario == Scenario::Offline, "offline_sample_count");
  if (target_qps && !(*target_qps > 0.0 && std::isfinite(*target_qps))) {
    fail(Errc::ConfigError, "target_qps must be positive");
  }
  if (samples_per_query && *samples_per_query == 0) {
    fail(Errc::ConfigError, "samples_per_query must be at least 1");
  }
  if (offline_sample_count && *offline_sample_count == 0) {
    fail(Errc::ConfigError, "offline_sample_count must be at least 1");
  }
  if (min_query_count == 0) fail(Errc::ConfigError, "min_query_count must be at least 1");
  if (min_duration < Nanos{0}) fail(Errc::ConfigError, "min_duration must be non-negative");
}

ScenarioConfig ScenarioConfig::single_stream(std::uint64_t min_query_count, Nanos min_duration) {
  ScenarioConfig c;
  c.scenario = Scenario::SingleStream;
  c.min_query_count = min_query_count;
  c.min_duration = min_duration;
  return c;
}

ScenarioConfig ScenarioConfig::multistream(std::size_t samples_per_query,
                                           std::uint64_t min_query_count, Nanos min_duration) {
  auto c = single_stream(min_query_count, min_duration);
  c.scenario = Scenario::MultiStream;
  c.samples_per_query = samples_per_query;
  return c;
}

ScenarioConfig ScenarioConfig::server(double target_qps, std::uint64_t min_query_count,
                                      Nanos min_duration) {
  auto c = single_stream(min_query_count, min_duration);
  c.scenario = Scenario::Server;
  c.target_qps = target_qps;
  return c;
}

ScenarioConfig ScenarioConfig::offline(std::size_t sample_count) {
  auto c = single_stream(1, Nanos{0});
  c.scenario = Scenario::Offline;
  c.offline_sample_count = sample_count;
  return c;
}

Nanos percentile(std::span<const Nanos> values, double p) {
  if (values.empty()) fail(Errc::EmptyInput, "percentile of an empty list");
  if (!(p > 0.0 && p <= 100.0)) fail(Errc::RangeError, "percentile must be in (0, 100]");
  // p in thousandths keeps ranks like 99.9% of 1000 exact.
  const auto pm = static_cast<unsigned __int128>(std::llround(p * 1000.0));
  const auto n = static_cast<unsigned __int128>(values.size());
  auto rank = static_cast<std::size_t>((pm * n + 99999) / 100000);
  rank = std::clamp<std::size_t>(rank, 1, values.size());
  std::vector<Nanos> sorted(values.begin(), values.end());
  std::nth_element(sorted.begin(), sorted.begin() + static_cast<std::ptrdiff_t>(rank - 1), sorted.end());
  return sorted[rank - 1];
}

namespace {

constexpr std::uint64_t kArrivalStream = 3;

class ArrivalStream {
 public:
  ArrivalStream(std::uint64_t seed, double qps) : rng_(derive_seed(seed, kArrivalStream)), mean_ns_(1e9 / qps) {}

  Nanos next() {
    t_ += Nanos{std::llround(rng_.exponential(mean_ns_))};
    return t_;
  }

 private:
  Rng rng_;
  double mean_ns_;
  Nanos t_{0};
};

}  // namespace

std::vector<Nanos> server_arrivals(std::uint64_t seed, double qps, std::uint64_t min_count,
                                   Nanos min_duration) {
  if (!(qps > 0.0)) fail(Errc::ConfigError, "target_qps must be positive");
  ArrivalStream stream(seed, qps);
  std::vector<Nanos> out;
  while (out.size() < min_count || out.empty() || out.back() < min_duration) out.push_back(stream.next());
  return out;
}

std::vector<Nanos> server_arrivals(std::uint64_t seed, double qps, std::size_t count) {
  if (!(qps > 0.0)) fail(Errc::ConfigError, "target_qps must be positive");
  ArrivalStream stream(seed, qps);
  std::vector<Nanos> out(count);
  for (auto& t : out) t = stream.next();
  return out;
}

namespace {

std::vector<std::size_t> all_indices(const Sut& sut) {
  std::vector<std::size_t> idx(sut.store().size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return idx;
}

// Loads every sample for the duration of a run.
class LoadedSamples {
 public:
  LoadedSamples(Sut& sut, Clock& clock) : sut_(sut), indices_(all_indices(sut)) {
    if (indices_.empty()) fail(Errc::EmptyInput, "dataset has no samples");
    const auto before = sut.preprocess_time();
    sut.load_query_samples(indices_, clock);
    preprocess_ = sut.preprocess_time() - before;
  }
  ~LoadedSamples() { sut_.unload_query_samples(indices_); }

  std::size_t size() const noexcept { return indices_.size(); }
  Nanos preprocess_time() const noexcept { return preprocess_; }

 private:
  Sut& sut_;
  std::vector<std::size_t> indices_;
  Nanos preprocess_{0};
};

LatencyRecord make_record(std::uint64_t query_id, std::span<const QueryResponse> rs, Nanos run_start,
                          Nanos scheduled) {
  LatencyRecord r;
  r.query_id = query_id;
  r.sample_count = rs.size();
  r.scheduled_time = scheduled - run_start;
  Nanos last_end{0};
  for (const auto& q : rs) {
    last_end = std::max(last_end, q.t_post_end);
    r.model_time += q.t_model_end - q.t_model_start;
    r.post_time += q.t_post_end - q.t_model_end;
  }
  r.latency = last_end - scheduled;
  r.issue_delay = rs.empty() ? Nanos{0} : rs.front().t_begin - scheduled;
  return r;
}

void keep_outputs(RunResult& result, std::vector<QueryResponse>& rs) {
  if (result.config.mode != TestMode::Accuracy) return;
  for (auto& q : rs) result.outputs.push_back({q.query_id, q.sample_index, std::move(q.outputs)});
}

// Closed-loop engine shared by single-stream and multistream.
RunResult run_closed_loop(const ScenarioConfig& cfg, std::size_t per_query, Sut& sut, Clock& clock) {
  RunResult result;
  result.config = cfg;
  LoadedSamples loaded(sut, clock);
  result.preprocess_time = loaded.preprocess_time();
  const auto n = loaded.size();
  const bool accuracy = cfg.mode == TestMode::Accuracy;

  const auto start = clock.now();
  std::size_t next_index = 0;
  Nanos last_end = start;
  for (std::uint64_t qid = 0;; ++qid) {
    if (accuracy) {
      if (next_index >= n) break;
    } else if (qid >= cfg.min_query_count && last_end - start >= cfg.min_duration) {
      break;
    }
    const auto count = accuracy ? std::min(per_query, n - next_index) : per_query;
    std::vector<QuerySample> samples;
    for (std::size_t i = 0; i < count; ++i) {
      samples.push_back({qid, next_index % n});
      result.issued.push_back(next_index % n);
      ++next_index;
    }
    const auto issued = clock.now();
    auto rs = sut.issue_query(samples, clock, issued);
    result.records.push_back(make_record(qid, rs, start, issued));
    last_end = clock.now();
    keep_outputs(result, rs);
  }
  result.elapsed = last_end - start;
  return result;
}

struct ServerQuery {
  std::uint64_t query_id;
  std::size_t sample_index;
  Nanos scheduled;  // absolute
};

std::vector<ServerQuery> plan_server(const ScenarioConfig& cfg, std::size_t n, Nanos start,
                                     std::vector<Nanos>& arrivals) {
  arrivals = cfg.mode == TestMode::Accuracy
                 ? server_arrivals(cfg.seed, *cfg.target_qps, n)
                 : server_arrivals(cfg.seed, *cfg.target_qps, cfg.min_query_count, cfg.min_duration);
  std::vector<ServerQuery> plan;
  plan.reserve(arrivals.size());
  for (std::size_t i = 0; i < arrivals.size(); ++i) plan.push_back({i, i % n, start + arrivals[i]});
  return plan;
}

// Lanes become free in (time, lane) order; each arrival takes the earliest
// free lane, so queued queries start in arrival order.
void simulate_server(const std::vector<ServerQuery>& plan, Sut& sut, std::size_t lanes,
                     Nanos start, RunResult& result) {
  using Event = std::pair<Nanos, std::size_t>;
  std::priority_queue<Event, std::vector<Event>, std::greater<>> free_at;
  for (std::size_t l = 0; l < lanes; ++l) free_at.push({start, l});
  Nanos last_end = start;
  for (const auto& q : plan) {
    const auto [lane_free, lane] = free_at.top();
    free_at.pop();
    VirtualClock lane_clock(std::max(lane_free, q.scheduled));
    const QuerySample sample{q.query_id, q.sample_index};
    auto rs = sut.issue_query(std::span(&sample, 1), lane_clock, q.scheduled);
    result.records.push_back(make_record(q.query_id, rs, start, q.scheduled));
    keep_outputs(result, rs);
    last_end = std::max(last_end, lane_clock.now());
    free_at.push({lane_clock.now(), lane});
  }
  result.elapsed = last_end - start;
}

void serve_threaded(const std::vector<ServerQuery>& plan, Sut& sut, std::size_t lanes, Clock& clock,
                    Nanos start, RunResult& result) {
  std::mutex mu;
  std::condition_variable cv;
  std::deque<const ServerQuery*> pending;
  bool done = false;
  std::exception_ptr error;
  std::vector<std::pair<LatencyRecord, std::vector<QueryResponse>>> completed;
  Nanos last_end = start;

  auto worker = [&] {
    for (;;) {
      const ServerQuery* q = nullptr;
      {
        std::unique_lock lock(mu);
        cv.wait(lock, [&] { return !pending.empty() || done; });
        if (pending.empty()) return;
        q = pending.front();
        pending.pop_front();
      }
      try {
        const QuerySample sample{q->query_id, q->sample_index};
        auto rs = sut.issue_query(std::span(&sample, 1), clock, q->scheduled);
        const auto end = clock.now();
        auto record = make_record(q->query_id, rs, start, q->scheduled);
        std::lock_guard lock(mu);
        last_end = std::max(last_end, end);
        completed.emplace_back(record, std::move(rs));
      } catch (...) {
        std::lock_guard lock(mu);
        if (!error) error = std::current_exception();
        done = true;
        pending.clear();
        cv.notify_all();
        return;
      }
    }
  };

  std::vector<std::thread> pool;
  for (std::size_t i = 0; i < lanes; ++i) pool.emplace_back(worker);
  for (const auto& q : plan) {
    clock.sleep_until(q.scheduled);
    std::lock_guard lock(mu);
    if (done) break;
    pending.push_back(&q);
    cv.notify_one();
  }
  {
    std::lock_guard lock(mu);
    done = true;
  }
  cv.notify_all();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);

  std::sort(completed.begin(), completed.end(),
            [](const auto& a, const auto& b) { return a.first.query_id < b.first.query_id; });
  for (auto& [record, rs] : completed) {
    result.records.push_back(record);
    keep_outputs(result, rs);
  }
  result.elapsed = last_end - start;
}

}  // namespace

RunResult run_offline(const ScenarioConfig& cfg, Sut& sut, Clock& clock) {
  cfg.validate();
  if (cfg.scenario != Scenario::Offline) fail(Errc::ConfigError, "run_offline needs an offline config");
  RunResult result;
  result.config = cfg;
  LoadedSamples loaded(sut, clock);
  result.preprocess_time = loaded.preprocess_time();
  const auto n = loaded.size();
  const auto count = cfg.mode == TestMode::Accuracy ? n : *cfg.offline_sample_count;
  if (count > n) {
    fail(Errc::ConfigError, "offline_sample_count " + std::to_string(count) + " exceeds the " +
                                std::to_string(n) + " samples in the dataset");
  }
  std::vector<QuerySample> samples;
  for (std::size_t i = 0; i < count; ++i) {
    samples.push_back({0, i});
    result.issued.push_back(i);
  }
  const auto start = clock.now();
  auto rs = sut.issue_query(samples, clock, start);
  result.records.push_back(make_record(0, rs, start, start));
  result.elapsed = clock.now() - start;
  keep_outputs(result, rs);
  return result;
}

RunResult run_single_stream(const ScenarioConfig& cfg, Sut& sut, Clock& clock) {
  cfg.validate();
  if (cfg.scenario != Scenario::SingleStream) {
    fail(Errc::ConfigError, "run_single_stream needs a single-stream config");
  }
  return run_closed_loop(cfg, 1, sut, clock);
}

RunResult run_multistream(const ScenarioConfig& cfg, Sut& sut, Clock& clock) {
  cfg.validate();
  if (cfg.scenario != Scenario::MultiStream) {
    fail(Errc::ConfigError, "run_multistream needs a multistream config");
  }
  return run_closed_loop(cfg, *cfg.samples_per_query, sut, clock);
}

RunResult run_server(const ScenarioConfig& cfg, Sut& sut, Clock& clock) {
  cfg.validate();
  if (cfg.scenario != Scenario::Server) fail(Errc::ConfigError, "run_server needs a server config");
  RunResult result;
  result.config = cfg;
  LoadedSamples loaded(sut, clock);
  result.preprocess_time = loaded.preprocess_time();
  const auto start = clock.now();
  const auto plan = plan_server(cfg, loaded.size(), start, result.arrivals);
  for (const auto& q : plan) result.issued.push_back(q.sample_index);
  const auto lanes = std::max<std::size_t>(1, sut.max_concurrency());
  if (clock.is_virtual()) {
    simulate_server(plan, sut, lanes, start, result);
    // The shared clock ends where the last query completed.
    clock.sleep_until(start + result.elapsed);
  } else {
    serve_threaded(plan, sut, lanes, clock, start, result);
  }
  return result;
}

RunResult run_scenario(const ScenarioConfig& cfg, Sut& sut, Clock& clock) {
  switch (cfg.scenario) {
    case Scenario::Offline: return run_offline(cfg, sut, clock);
    case Scenario::SingleStream: return run_single_stream(cfg, sut, clock);
    case Scenario::Server: return run_server(cfg, sut, clock);
    case Scenario::MultiStream: return run_multistream(cfg, sut, clock);
  }
  fail(Errc::ConfigError, "unknown scenario");
}

}  // namespace mlh
