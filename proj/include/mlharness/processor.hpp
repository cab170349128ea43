#pragma once

#include <array>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "mlharness/clock.hpp"
#include "mlharness/frame.hpp"
#include "mlharness/manifest.hpp"
#include "mlharness/worker.hpp"

namespace mlh {

// What runs behind the six hooks.
class Processor {
 public:
  virtual ~Processor() = default;

  // Acquires resources (e.g. launches a worker) before the first hook.
  virtual void open(const Ctx& /*ctx*/) {}
  // `data` is present exactly for preprocess and postprocess; the result is
  // ignored for the other hooks. Simulated costs are charged to `clock`.
  virtual std::optional<TensorList> call(HookId hook, const Ctx& ctx,
                                         std::optional<TensorList> data, Clock& clock) = 0;
  virtual void close() {}
};

enum class PipelineKind { BuiltIn, External, InProcess };

// Lifecycle wrapper around a Processor. start() dispatches before_preprocess
// then before_postprocess; stop() dispatches after_preprocess then
// after_postprocess. One hook runs at a time; concurrent callers are
// serialized.
class Pipeline {
 public:
  Pipeline(PipelineKind kind, std::unique_ptr<Processor> processor, Ctx ctx);
  ~Pipeline();

  Pipeline(const Pipeline&) = delete;
  Pipeline& operator=(const Pipeline&) = delete;

  void start(Clock& clock = steady_clock());
  void stop(Clock& clock = steady_clock());

  std::optional<TensorList> run_hook(HookId hook, std::optional<TensorList> data,
                                     Clock& clock = steady_clock());

  PipelineKind kind() const noexcept { return kind_; }
  const Ctx& ctx() const noexcept { return ctx_; }
  bool running() const;

  // Completed dispatches per hook, and the order of the four lifecycle hooks.
  std::array<std::uint64_t, kHookCount> hook_counts() const;
  std::vector<HookId> lifecycle_log() const;

 private:
  std::optional<TensorList> dispatch(HookId hook, std::optional<TensorList> data, Clock& clock);

  PipelineKind kind_;
  std::unique_ptr<Processor> processor_;
  Ctx ctx_;
  mutable std::mutex mu_;
  bool running_ = false;
  std::array<std::uint64_t, kHookCount> counts_{};
  std::vector<HookId> lifecycle_;
};

using HookFunction = std::function<std::optional<TensorList>(
    HookId, const Ctx&, std::optional<TensorList>, Clock&)>;

struct BuiltinOptions {
  // Channel order of the raw images in the dataset.
  ColorLayout source_color = ColorLayout::RGB;
};

// Compiles manifest steps into a preprocess transform; postprocess is the
// identity. Steps run in manifest order, adjacent mean/rescale fuse into one
// normalization, and the layout conversion is applied last. Raw inputs of
// rank 3 are HWC images; outputs carry a leading batch axis of 1.
std::unique_ptr<Pipeline> make_builtin_pipeline(std::vector<StepSpec> steps, Ctx ctx = {},
                                                BuiltinOptions options = {});

std::unique_ptr<Pipeline> make_external_pipeline(std::string launch_command, Ctx ctx = {},
                                                 WorkerOptions options = {});

// In-process pipeline whose preprocess and postprocess return their input.
std::unique_ptr<Pipeline> make_identity_pipeline(Ctx ctx = {});

std::unique_ptr<Pipeline> make_inprocess_pipeline(HookFunction fn, Ctx ctx = {});

// Built-in or external according to the manifest's processing style.
std::unique_ptr<Pipeline> make_pipeline(const Manifest& manifest, WorkerOptions options = {});

// The preprocess transform of a built-in pipeline, usable standalone.
Tensor apply_builtin_steps(const std::vector<StepSpec>& steps, const Tensor& raw,
                           BuiltinOptions options = {});

}  // namespace mlh
