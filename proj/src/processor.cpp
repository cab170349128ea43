#include "mlharness/processor.hpp"

#include "mlharness/image_ops.hpp"

namespace mlh {

Pipeline::Pipeline(PipelineKind kind, std::unique_ptr<Processor> processor, Ctx ctx)
    : kind_(kind), processor_(std::move(processor)), ctx_(std::move(ctx)) {}

Pipeline::~Pipeline() {
  try {
    stop();
  } catch (...) {
  }
}

bool Pipeline::running() const {
  std::lock_guard lock(mu_);
  return running_;
}

std::array<std::uint64_t, kHookCount> Pipeline::hook_counts() const {
  std::lock_guard lock(mu_);
  return counts_;
}

std::vector<HookId> Pipeline::lifecycle_log() const {
  std::lock_guard lock(mu_);
  return lifecycle_;
}

std::optional<TensorList> Pipeline::dispatch(HookId hook, std::optional<TensorList> data,
                                             Clock& clock) {
  auto result = processor_->call(hook, ctx_, std::move(data), clock);
  ++counts_[static_cast<std::size_t>(hook)];
  if (!hook_carries_data(hook)) {
    lifecycle_.push_back(hook);
    return std::nullopt;
  }
  if (!result) result.emplace();
  return result;
}

void Pipeline::start(Clock& clock) {
  std::lock_guard lock(mu_);
  if (running_) fail(Errc::LifecycleError, "pipeline already started");
  processor_->open(ctx_);
  try {
    dispatch(HookId::BeforePreprocess, std::nullopt, clock);
    dispatch(HookId::BeforePostprocess, std::nullopt, clock);
  } catch (...) {
    processor_->close();
    throw;
  }
  running_ = true;
}

void Pipeline::stop(Clock& clock) {
  std::lock_guard lock(mu_);
  if (!running_) return;
  running_ = false;
  try {
    dispatch(HookId::AfterPreprocess, std::nullopt, clock);
    dispatch(HookId::AfterPostprocess, std::nullopt, clock);
  } catch (...) {
    processor_->close();
    throw;
  }
  processor_->close();
}

std::optional<TensorList> Pipeline::run_hook(HookId hook, std::optional<TensorList> data,
                                             Clock& clock) {
  if (hook_carries_data(hook) != data.has_value()) {
    fail(Errc::HookContractError,
         std::string(hook_name(hook)) +
             (data ? " takes no data" : " requires data"));
  }
  std::lock_guard lock(mu_);
  if (!running_) fail(Errc::LifecycleError, "pipeline is not started");
  return dispatch(hook, std::move(data), clock);
}

// ---------------------------------------------------------------------------
// built-in steps

namespace {

Tensor as_hwc(const Tensor& raw) {
  if (raw.rank() == 3) return raw;
  if (raw.rank() == 4 && raw.shape()[0] == 1) {
    return raw.reshaped({raw.shape()[1], raw.shape()[2], raw.shape()[3]});
  }
  fail(Errc::RankError, "built-in steps expect an HWC image, got rank " +
                            std::to_string(raw.rank()));
}

ImageDims dims_of(const Tensor& hwc) { return {hwc.shape()[0], hwc.shape()[1], hwc.shape()[2]}; }

}  // namespace

Tensor apply_builtin_steps(const std::vector<StepSpec>& steps, const Tensor& raw,
                           BuiltinOptions options) {
  Tensor t = as_hwc(raw);
  Layout out_layout = Layout::NHWC;
  std::size_t i = 0;

  if (!steps.empty() && std::holds_alternative<DecodeStep>(steps[0])) {
    const auto& d = std::get<DecodeStep>(steps[0]);
    t = builtin_decode(t, dims_of(t), options.source_color, d.color_layout, d.element_type);
    out_layout = d.data_layout;
    i = 1;
  } else if (t.dtype() == ElementType::UInt8 || t.dtype() == ElementType::Int8) {
    t = builtin_decode(t, dims_of(t), options.source_color, options.source_color, t.dtype());
  } else if (t.dtype() != ElementType::Float32) {
    fail(Errc::ShapeMismatch, "built-in steps need 8-bit or float32 images");
  }

  for (; i < steps.size(); ++i) {
    const auto& step = steps[i];
    if (std::holds_alternative<DecodeStep>(step)) {
      fail(Errc::ValidationError, "decode must be the first step");
    } else if (const auto* crop = std::get_if<CropStep>(&step)) {
      t = builtin_center_crop(t, crop->percentage);
    } else if (const auto* resize = std::get_if<ResizeStep>(&step)) {
      if (resize->channels != t.shape()[2]) {
        fail(Errc::ShapeMismatch, "resize declares " + std::to_string(resize->channels) +
                                      " channels, image has " + std::to_string(t.shape()[2]));
      }
      t = builtin_resize_bilinear(t, resize->height, resize->width, resize->keep_aspect_ratio);
    } else if (const auto* mean = std::get_if<MeanStep>(&step)) {
      double rescale = 1.0;
      if (i + 1 < steps.size()) {
        if (const auto* r = std::get_if<RescaleStep>(&steps[i + 1])) {
          rescale = r->rescale;
          ++i;
        }
      }
      t = builtin_normalize(t, mean->mean, rescale);
    } else if (const auto* rescale = std::get_if<RescaleStep>(&step)) {
      const std::vector<double> zeros(t.shape()[2], 0.0);
      t = builtin_normalize(t, zeros, rescale->rescale);
    } else if (const auto* layout = std::get_if<LayoutStep>(&step)) {
      out_layout = layout->layout;
    }
  }

  const auto& s = t.shape();
  t = t.reshaped({1, s[0], s[1], s[2]});
  return layout_convert(t, Layout::NHWC, out_layout);
}

namespace {

class BuiltinProcessor final : public Processor {
 public:
  BuiltinProcessor(std::vector<StepSpec> steps, BuiltinOptions options)
      : steps_(std::move(steps)), options_(options) {}

  std::optional<TensorList> call(HookId hook, const Ctx&, std::optional<TensorList> data,
                                 Clock&) override {
    if (hook == HookId::Preprocess) {
      TensorList out;
      out.reserve(data->size());
      for (const auto& t : *data) out.push_back(apply_builtin_steps(steps_, t, options_));
      return out;
    }
    return data;
  }

 private:
  std::vector<StepSpec> steps_;
  BuiltinOptions options_;
};

class ExternalProcessor final : public Processor {
 public:
  ExternalProcessor(std::string command, WorkerOptions options)
      : command_(std::move(command)), options_(options) {}

  void open(const Ctx&) override {
    if (worker_ && worker_->alive()) fail(Errc::LifecycleError, "worker already running");
    worker_ = std::make_unique<WorkerProcess>(command_, options_);
  }

  std::optional<TensorList> call(HookId hook, const Ctx& ctx, std::optional<TensorList> data,
                                 Clock&) override {
    if (!worker_) fail(Errc::WorkerCrashed, "worker is not running");
    static const TensorList kNone;
    const auto request = encode_frame(data ? *data : kNone, ctx, hook);
    auto response = worker_->exchange(request, hook);
    if (!hook_carries_data(hook)) return std::nullopt;
    return std::move(response.tensors);
  }

  void close() override {
    if (worker_) worker_->close();
    worker_.reset();
  }

 private:
  std::string command_;
  WorkerOptions options_;
  std::unique_ptr<WorkerProcess> worker_;
};

class FunctionProcessor final : public Processor {
 public:
  explicit FunctionProcessor(HookFunction fn) : fn_(std::move(fn)) {}

  std::optional<TensorList> call(HookId hook, const Ctx& ctx, std::optional<TensorList> data,
                                 Clock& clock) override {
    return fn_(hook, ctx, std::move(data), clock);
  }

 private:
  HookFunction fn_;
};

}  // namespace

std::unique_ptr<Pipeline> make_builtin_pipeline(std::vector<StepSpec> steps, Ctx ctx,
                                                BuiltinOptions options) {
  for (std::size_t i = 1; i < steps.size(); ++i) {
    if (std::holds_alternative<DecodeStep>(steps[i])) {
      fail(Errc::ValidationError, "decode must be the first step");
    }
  }
  return std::make_unique<Pipeline>(
      PipelineKind::BuiltIn, std::make_unique<BuiltinProcessor>(std::move(steps), options),
      std::move(ctx));
}

std::unique_ptr<Pipeline> make_external_pipeline(std::string launch_command, Ctx ctx,
                                                 WorkerOptions options) {
  return std::make_unique<Pipeline>(
      PipelineKind::External,
      std::make_unique<ExternalProcessor>(std::move(launch_command), options), std::move(ctx));
}

std::unique_ptr<Pipeline> make_identity_pipeline(Ctx ctx) {
  return make_inprocess_pipeline(
      [](HookId, const Ctx&, std::optional<TensorList> data, Clock&) { return data; },
      std::move(ctx));
}

std::unique_ptr<Pipeline> make_inprocess_pipeline(HookFunction fn, Ctx ctx) {
  return std::make_unique<Pipeline>(
      PipelineKind::InProcess, std::make_unique<FunctionProcessor>(std::move(fn)),
      std::move(ctx));
}

std::unique_ptr<Pipeline> make_pipeline(const Manifest& manifest, WorkerOptions options) {
  if (const auto* ext = std::get_if<ExternalProcessing>(&manifest.processing)) {
    return make_external_pipeline(ext->worker_launch, manifest.hook_ctx(), options);
  }
  return make_builtin_pipeline(std::get<std::vector<StepSpec>>(manifest.processing),
                               manifest.hook_ctx());
}

}  // namespace mlh
