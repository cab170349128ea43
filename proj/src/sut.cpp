#include "mlharness/sut.hpp"

#include <fstream>
#include <iterator>

#include "mlharness/frame.hpp"

namespace mlh {

namespace fs = std::filesystem;

DatasetStore::DatasetStore(std::vector<Tensor> samples,
                           std::optional<std::vector<std::int64_t>> labels)
    : samples_(std::move(samples)), labels_(std::move(labels)), cache_(samples_.size()) {
  if (labels_ && labels_->size() != samples_.size()) {
    fail(Errc::LengthMismatch, std::to_string(labels_->size()) + " labels for " +
                                   std::to_string(samples_.size()) + " samples");
  }
}

const Tensor& DatasetStore::sample(std::size_t index) const {
  if (index >= samples_.size()) {
    fail(Errc::IndexOutOfRange, "sample index " + std::to_string(index) + " out of range (" +
                                    std::to_string(samples_.size()) + " samples)");
  }
  return samples_[index];
}

bool DatasetStore::is_loaded(std::size_t index) const noexcept {
  return index < cache_.size() && cache_[index].has_value();
}

const TensorList& DatasetStore::cached(std::size_t index) const {
  if (!is_loaded(index)) fail(Errc::NotLoaded, "sample " + std::to_string(index) + " is not loaded");
  return *cache_[index];
}

void DatasetStore::put(std::size_t index, TensorList preprocessed) {
  sample(index);  // range check
  cache_[index] = std::move(preprocessed);
}

void DatasetStore::erase(std::size_t index) noexcept {
  if (index < cache_.size()) cache_[index].reset();
}

std::size_t DatasetStore::loaded_count() const noexcept {
  std::size_t n = 0;
  for (const auto& c : cache_) n += c.has_value();
  return n;
}

// ---------------------------------------------------------------------------
// files

namespace {

std::vector<std::uint8_t> read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(Errc::IoError, "cannot read " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

void write_file(const fs::path& path, const std::vector<std::uint8_t>& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!out) fail(Errc::IoError, "cannot write " + path.string());
}

}  // namespace

void write_dataset(const fs::path& path, std::span<const Tensor> samples) {
  std::vector<std::uint8_t> out;
  put_u32(out, static_cast<std::uint32_t>(samples.size()));
  for (const auto& t : samples) append_tensor(out, t);
  write_file(path, out);
}

std::vector<Tensor> read_dataset(const fs::path& path) {
  const auto bytes = read_file(path);
  ByteReader in(bytes);
  const auto count = in.u32();
  std::vector<Tensor> samples;
  samples.reserve(std::min<std::size_t>(count, bytes.size()));
  for (std::uint32_t i = 0; i < count; ++i) samples.push_back(read_tensor(in));
  if (in.remaining() != 0) {
    fail(Errc::LengthMismatch, path.string() + " has trailing bytes after " +
                                   std::to_string(count) + " samples");
  }
  return samples;
}

void write_labels(const fs::path& path, std::span<const std::int64_t> labels) {
  std::vector<std::uint8_t> out;
  for (auto l : labels) put_u64(out, static_cast<std::uint64_t>(l));
  write_file(path, out);
}

std::vector<std::int64_t> read_labels(const fs::path& path) {
  const auto bytes = read_file(path);
  if (bytes.size() % 8 != 0) {
    fail(Errc::LengthMismatch, path.string() + " is not a whole number of i64 labels");
  }
  ByteReader in(bytes);
  std::vector<std::int64_t> labels(bytes.size() / 8);
  for (auto& l : labels) l = static_cast<std::int64_t>(in.u64());
  return labels;
}

SyntheticDataset generate_synthetic_dataset(std::size_t count, std::uint64_t height,
                                            std::uint64_t width, std::uint64_t channels,
                                            std::size_t num_classes, std::uint64_t seed) {
  if (num_classes == 0) fail(Errc::ConfigError, "num_classes must be positive");
  Rng rng(seed);
  SyntheticDataset ds;
  for (std::size_t i = 0; i < count; ++i) {
    Tensor t(ElementType::UInt8, {height, width, channels});
    for (auto& b : t.mutable_bytes()) b = static_cast<std::uint8_t>(rng.next_u64() >> 56);
    ds.samples.push_back(std::move(t));
    ds.labels.push_back(static_cast<std::int64_t>(rng.next_u64() % num_classes));
  }
  return ds;
}

// ---------------------------------------------------------------------------
// query lifecycle

Sut::Sut(DatasetStore& store, Pipeline& pipeline, BackendAdapter& backend, TraceRecorder* trace,
         std::string run_id)
    : store_(store), pipeline_(pipeline), backend_(backend), trace_(trace), run_id_(std::move(run_id)) {}

void Sut::load_query_samples(std::span<const std::size_t> indices, Clock& clock) {
  for (auto index : indices) store_.sample(index);
  for (auto index : indices) {
    if (store_.is_loaded(index)) continue;
    const auto t0 = clock.now();
    auto out = pipeline_.run_hook(HookId::Preprocess, TensorList{store_.sample(index)}, clock);
    preprocess_ns_ += (clock.now() - t0).count();
    store_.put(index, std::move(*out));
  }
}

void Sut::unload_query_samples(std::span<const std::size_t> indices) {
  for (auto index : indices) store_.erase(index);
}

std::vector<QueryResponse> Sut::issue_query(std::span<const QuerySample> samples, Clock& clock,
                                            std::optional<Nanos> issued_at) {
  std::vector<QueryResponse> responses;
  responses.reserve(samples.size());
  const auto begin = clock.now();
  const auto issue = std::min(issued_at.value_or(begin), begin);
  const auto max_level = trace_ ? trace_->max_level(run_id_) : std::nullopt;

  for (const auto& q : samples) {
    try {
      const auto& inputs = store_.cached(q.sample_index);
      QueryResponse r;
      r.query_id = q.query_id;
      r.sample_index = q.sample_index;
      r.t_issue = issue;
      r.t_begin = begin;
      r.t_model_start = clock.now();
      auto result = backend_.infer(inputs, InferContext{q.sample_index, clock});
      r.t_model_end = clock.now();
      r.outputs = std::move(*pipeline_.run_hook(HookId::Postprocess, std::move(result.outputs), clock));
      r.t_post_end = clock.now();
      if (max_level) {
        for (auto& span : result.spans) {
          if (span.level > *max_level) continue;
          span.run_id = run_id_;
          span.attributes["query_id"] = std::to_string(q.query_id);
          trace_->record(std::move(span));
        }
      }
      responses.push_back(std::move(r));
    } catch (const Error& e) {
      throw Error(e.code(), "query " + std::to_string(q.query_id) + ": " + e.what());
    }
  }
  return responses;
}

}  // namespace mlh
