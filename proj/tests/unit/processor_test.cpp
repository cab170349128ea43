#include "mlharness/processor.hpp"

#include <sstream>

#include "mlharness/worker.hpp"
#include "test_support.hpp"

namespace mlh {
namespace {

using namespace std::chrono_literals;

std::string worker_cmd(const std::string& profile, const std::string& extra = "") {
  return std::string("'") + MLH_TEST_WORKER + "' --profile " + profile + extra;
}

std::vector<std::string> lines_of(const std::filesystem::path& p) {
  std::istringstream in(test::read_text(p));
  std::vector<std::string> out;
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

TEST(SplitCommand, QuotesAndEscapes) {
  EXPECT_EQ(split_command("python3 -m  pkg --x 1"),
            (std::vector<std::string>{"python3", "-m", "pkg", "--x", "1"}));
  EXPECT_EQ(split_command(R"('a b' "c d" e\ f)"), (std::vector<std::string>{"a b", "c d", "e f"}));
  EXPECT_EQ(split_command(R"(x "" y)"), (std::vector<std::string>{"x", "", "y"}));
  EXPECT_ERRC(split_command("'open"), Errc::WorkerLaunchError);
  EXPECT_TRUE(split_command("   ").empty());
}

TEST(Pipeline, LifecycleOrderAndCounts) {
  std::vector<HookId> seen;
  auto p = make_inprocess_pipeline([&](HookId h, const Ctx&, std::optional<TensorList> d, Clock&) {
    seen.push_back(h);
    return d;
  });
  VirtualClock clock;
  EXPECT_ERRC(p->run_hook(HookId::Preprocess, TensorList{}, clock), Errc::LifecycleError);
  p->start(clock);
  EXPECT_TRUE(p->running());
  EXPECT_ERRC(p->start(clock), Errc::LifecycleError);
  for (int i = 0; i < 3; ++i) {
    p->run_hook(HookId::Preprocess, TensorList{Tensor::scalar<float>(1)}, clock);
    p->run_hook(HookId::Postprocess, TensorList{}, clock);
  }
  p->stop(clock);
  EXPECT_FALSE(p->running());
  EXPECT_EQ(p->lifecycle_log(),
            (std::vector<HookId>{HookId::BeforePreprocess, HookId::BeforePostprocess,
                                 HookId::AfterPreprocess, HookId::AfterPostprocess}));
  EXPECT_EQ(p->hook_counts(), (std::array<std::uint64_t, kHookCount>{1, 3, 1, 1, 3, 1}));
  EXPECT_EQ(seen.front(), HookId::BeforePreprocess);
  EXPECT_EQ(seen.back(), HookId::AfterPostprocess);
  p->stop(clock);  // idempotent
  EXPECT_EQ(p->hook_counts()[5], 1u);
}

TEST(Pipeline, HookContract) {
  auto p = make_identity_pipeline();
  VirtualClock clock;
  p->start(clock);
  EXPECT_ERRC(p->run_hook(HookId::Preprocess, std::nullopt, clock), Errc::HookContractError);
  EXPECT_ERRC(p->run_hook(HookId::BeforePreprocess, TensorList{}, clock), Errc::HookContractError);
  const TensorList in{Tensor::from_strings({2}, {"a", "b"})};
  EXPECT_EQ(p->run_hook(HookId::Postprocess, in, clock), in);
  p->stop(clock);
}

TEST(Pipeline, ClockIsPassedToHooks) {
  auto p = make_inprocess_pipeline([](HookId h, const Ctx&, std::optional<TensorList> d, Clock& c) {
    if (h == HookId::Preprocess) c.sleep_for(7ms);
    return d;
  });
  VirtualClock clock;
  p->start(clock);
  p->run_hook(HookId::Preprocess, TensorList{}, clock);
  p->stop(clock);
  EXPECT_EQ(clock.now(), Nanos{7ms});
}

TEST(Pipeline, BuiltinRejectsLateDecode) {
  EXPECT_ERRC(make_builtin_pipeline({CropStep{50}, DecodeStep{}}), Errc::ValidationError);
}

TEST(Worker, IdentityEchoesRequestBytes) {
  WorkerProcess w(worker_cmd("identity"));
  std::mt19937_64 rng(3);
  for (int i = 0; i < 50; ++i) {
    TensorList ts;
    for (int k = 0; k < 3; ++k) ts.push_back(test::random_tensor(rng, static_cast<ElementType>(rng() % 7)));
    const auto hook = i % 2 ? HookId::Preprocess : HookId::Postprocess;
    const auto request = encode_frame(ts, {{"i", std::to_string(i)}}, hook);
    const auto f = w.exchange(request, hook);
    EXPECT_EQ(encode_frame(f.tensors, f.ctx, f.hook), request);
  }
  EXPECT_EQ(w.close(), 0);
  EXPECT_FALSE(w.alive());
}

TEST(Worker, CrashIsReported) {
  WorkerProcess w(worker_cmd("crash"));
  const auto req = encode_frame({}, {}, HookId::Preprocess);
  EXPECT_ERRC(w.exchange(req, HookId::Preprocess), Errc::WorkerCrashed);
}

TEST(Worker, HangTimesOut) {
  WorkerProcess w(worker_cmd("hang"), WorkerOptions{200ms});
  const auto req = encode_frame({}, {}, HookId::Postprocess);
  const auto t0 = std::chrono::steady_clock::now();
  EXPECT_ERRC(w.exchange(req, HookId::Postprocess), Errc::WorkerCrashed);
  EXPECT_LT(std::chrono::steady_clock::now() - t0, 5s);
}

TEST(Worker, MalformedResponsesAreProtocolErrors) {
  for (const char* profile : {"garbage", "wrong_hook", "error"}) {
    SCOPED_TRACE(profile);
    WorkerProcess w(worker_cmd(profile));
    const auto req = encode_frame({}, {}, HookId::Preprocess);
    EXPECT_ERRC(w.exchange(req, HookId::Preprocess), Errc::ProtocolError);
  }
}

TEST(Worker, LifecycleHooksEchoEvenForFaultyProfiles) {
  WorkerProcess w(worker_cmd("garbage"));
  const auto req = encode_frame({}, {{"model", "m"}}, HookId::BeforePreprocess);
  const auto f = w.exchange(req, HookId::BeforePreprocess);
  EXPECT_EQ(f.ctx.at("model"), "m");
}

TEST(Worker, BadCommandFailsToLaunch) {
  EXPECT_ERRC(WorkerProcess("/nonexistent/worker-binary --x"), Errc::WorkerLaunchError);
  EXPECT_ERRC(WorkerProcess("   "), Errc::WorkerLaunchError);
}

TEST(ExternalPipeline, HookCountsAcrossTenQueries) {
  test::TempDir dir;
  const auto log = dir / "hooks.log";
  auto p = make_external_pipeline(worker_cmd("identity", " --log '" + log.string() + "'"),
                                  {{"model", "tiny"}});
  VirtualClock clock;
  p->start(clock);
  for (int q = 0; q < 10; ++q) {
    const TensorList in{Tensor::scalar<std::int32_t>(q)};
    EXPECT_EQ(p->run_hook(HookId::Preprocess, in, clock), in);
    EXPECT_EQ(p->run_hook(HookId::Postprocess, in, clock), in);
  }
  p->stop(clock);
  EXPECT_EQ(p->hook_counts(), (std::array<std::uint64_t, kHookCount>{1, 10, 1, 1, 10, 1}));

  // The worker saw the same sequence.
  const auto lines = lines_of(log);
  ASSERT_EQ(lines.size(), 24u);
  EXPECT_EQ(lines[0], "before_preprocess");
  EXPECT_EQ(lines[1], "before_postprocess");
  EXPECT_EQ(lines[22], "after_preprocess");
  EXPECT_EQ(lines[23], "after_postprocess");
  EXPECT_EQ(std::count(lines.begin(), lines.end(), "preprocess"), 10);
  EXPECT_EQ(std::count(lines.begin(), lines.end(), "postprocess"), 10);
}

TEST(ExternalPipeline, ArgmaxProfile) {
  auto p = make_external_pipeline(worker_cmd("argmax"));
  VirtualClock clock;
  p->start(clock);
  const TensorList in{Tensor::from_values<float>({1, 4}, std::vector<float>{0.1f, 0.7f, 0.9f, 0.2f})};
  const auto out = p->run_hook(HookId::Postprocess, in, clock);
  ASSERT_TRUE(out);
  ASSERT_EQ(out->size(), 1u);
  EXPECT_EQ((*out)[0].values<std::int64_t>()[0], 2);
  p->stop(clock);
}

TEST(ExternalPipeline, CrashSurfacesThroughRunHook) {
  auto p = make_external_pipeline(worker_cmd("crash"));
  VirtualClock clock;
  p->start(clock);
  EXPECT_ERRC(p->run_hook(HookId::Preprocess, TensorList{}, clock), Errc::WorkerCrashed);
}

}  // namespace
}  // namespace mlh
