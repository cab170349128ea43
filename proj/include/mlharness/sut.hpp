#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mlharness/clock.hpp"
#include "mlharness/processor.hpp"
#include "mlharness/random.hpp"
#include "mlharness/tensor.hpp"
#include "mlharness/trace.hpp"

namespace mlh {

// Raw samples, optional labels, and the preprocessed cache for loaded indices.
class DatasetStore {
 public:
  explicit DatasetStore(std::vector<Tensor> samples,
                        std::optional<std::vector<std::int64_t>> labels = std::nullopt);

  std::size_t size() const noexcept { return samples_.size(); }
  const Tensor& sample(std::size_t index) const;
  const std::optional<std::vector<std::int64_t>>& labels() const noexcept { return labels_; }

  bool is_loaded(std::size_t index) const noexcept;
  // NotLoaded if the index has no cached entry.
  const TensorList& cached(std::size_t index) const;
  void put(std::size_t index, TensorList preprocessed);
  void erase(std::size_t index) noexcept;
  std::size_t loaded_count() const noexcept;

 private:
  std::vector<Tensor> samples_;
  std::optional<std::vector<std::int64_t>> labels_;
  std::vector<std::optional<TensorList>> cache_;
};

// Dataset file: u32 sample count, then each sample in the frame tensor
// encoding. Labels file: one little-endian i64 per sample.
void write_dataset(const std::filesystem::path& path, std::span<const Tensor> samples);
std::vector<Tensor> read_dataset(const std::filesystem::path& path);
void write_labels(const std::filesystem::path& path, std::span<const std::int64_t> labels);
std::vector<std::int64_t> read_labels(const std::filesystem::path& path);

// Random HWC uint8 images with labels uniform in [0, num_classes).
struct SyntheticDataset {
  std::vector<Tensor> samples;
  std::vector<std::int64_t> labels;
};
SyntheticDataset generate_synthetic_dataset(std::size_t count, std::uint64_t height,
                                            std::uint64_t width, std::uint64_t channels,
                                            std::size_t num_classes, std::uint64_t seed);

struct InferContext {
  std::size_t sample_index = 0;
  Clock& clock;
};

struct InferResult {
  TensorList outputs;
  std::vector<Span> spans;  // span_id and run_id are filled by the recorder
};

class BackendAdapter {
 public:
  virtual ~BackendAdapter() = default;
  virtual InferResult infer(const TensorList& inputs, const InferContext& ctx) = 0;
  virtual std::size_t max_concurrency() const noexcept = 0;
  virtual std::string describe() const = 0;
};

// --- simulated backend -------------------------------------------------------

// "10ms", "2.5us", "1s"; units ns|us|ms|s. ConfigError otherwise.
Nanos parse_duration(std::string_view text);

struct LatencyModel {
  enum class Kind { Constant, Uniform, Exponential };
  Kind kind = Kind::Constant;
  Nanos a{0};  // constant value, uniform lower bound, or exponential mean
  Nanos b{0};  // uniform upper bound

  static LatencyModel constant(Nanos d) { return {Kind::Constant, d, d}; }
  static LatencyModel uniform(Nanos lo, Nanos hi) { return {Kind::Uniform, lo, hi}; }
  static LatencyModel exponential(Nanos mean) { return {Kind::Exponential, mean, Nanos{0}}; }

  // "constant:10ms", "uniform:5ms:15ms", "exponential:5ms"; units ns|us|ms|s.
  static LatencyModel parse(std::string_view text);
  std::string describe() const;

  Nanos draw(Rng& rng) const;
};

struct BackendBehavior {
  enum class Kind { Identity, LookupLabel, CorruptedLookup };
  Kind kind = Kind::Identity;
  double error_rate = 0.0;

  // "identity", "lookup_label", "corrupted_lookup:0.1".
  static BackendBehavior parse(std::string_view text);
  std::string describe() const;
};

struct LayerPlanEntry {
  std::string name;
  double fraction = 1.0;
  std::vector<double> kernel_fractions;  // empty: no kernel spans
};

// "conv:0.6:0.5/0.5,fc:0.4" -> two layers, the first with two kernels.
std::vector<LayerPlanEntry> parse_layer_plan(std::string_view text);

struct SimulatedBackendConfig {
  LatencyModel latency;
  BackendBehavior behavior;
  std::uint64_t seed = 0;
  std::vector<LayerPlanEntry> layer_plan;
  std::string model_name = "model";
  // Deepest level of spans emitted.
  TraceLevel emit_level = TraceLevel::Model;
  // Extra time charged per emitted layer or kernel span.
  Nanos profiling_overhead_per_span{0};
  // True labels per sample index, for the lookup behaviors.
  std::vector<std::int64_t> label_table;
  std::size_t num_classes = 0;
  std::size_t max_concurrency = 1;

  void validate() const;
  std::string describe() const;
};

struct SimulatedRng {
  explicit SimulatedRng(std::uint64_t seed)
      : latency(derive_seed(seed, 1)), corruption(derive_seed(seed, 2)) {}
  Rng latency;
  Rng corruption;
};

// Advances `clock` by a drawn latency and emits one model span split into
// layer spans (and those into kernel spans) per the layer plan, abutting
// exactly.
InferResult simulated_infer(const SimulatedBackendConfig& cfg, const TensorList& inputs,
                            std::size_t sample_index, Clock& clock, SimulatedRng& rng);

class SimulatedBackend final : public BackendAdapter {
 public:
  explicit SimulatedBackend(SimulatedBackendConfig cfg);

  InferResult infer(const TensorList& inputs, const InferContext& ctx) override;
  std::size_t max_concurrency() const noexcept override { return cfg_.max_concurrency; }
  std::string describe() const override { return cfg_.describe(); }
  const SimulatedBackendConfig& config() const noexcept { return cfg_; }

 private:
  SimulatedBackendConfig cfg_;
  std::mutex rng_mu_;
  SimulatedRng rng_;
};

// --- query lifecycle ---------------------------------------------------------

struct QuerySample {
  std::uint64_t query_id = 0;
  std::size_t sample_index = 0;
};

struct QueryResponse {
  std::uint64_t query_id = 0;
  std::size_t sample_index = 0;
  TensorList outputs;
  Nanos t_issue{0};        // LoadGen issued the query
  Nanos t_begin{0};        // SUT started handling it
  Nanos t_model_start{0};
  Nanos t_model_end{0};
  Nanos t_post_end{0};
};

class Sut {
 public:
  Sut(DatasetStore& store, Pipeline& pipeline, BackendAdapter& backend,
      TraceRecorder* trace = nullptr, std::string run_id = "run");

  // Preprocesses and caches samples. Its time is accumulated separately and
  // never enters query latency.
  void load_query_samples(std::span<const std::size_t> indices, Clock& clock = steady_clock());
  // Serially, per sample: cached input -> backend -> postprocess.
  // `issued_at` defaults to the clock's current time.
  std::vector<QueryResponse> issue_query(std::span<const QuerySample> samples, Clock& clock,
                                         std::optional<Nanos> issued_at = std::nullopt);
  void unload_query_samples(std::span<const std::size_t> indices);

  std::size_t max_concurrency() const noexcept { return backend_.max_concurrency(); }
  const DatasetStore& store() const noexcept { return store_; }
  Nanos preprocess_time() const noexcept { return Nanos{preprocess_ns_.load()}; }

 private:
  DatasetStore& store_;
  Pipeline& pipeline_;
  BackendAdapter& backend_;
  TraceRecorder* trace_;
  std::string run_id_;
  std::atomic<std::int64_t> preprocess_ns_{0};
};

}  // namespace mlh
