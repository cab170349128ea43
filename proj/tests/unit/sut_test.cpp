#include "mlharness/sut.hpp"

#include <cmath>

#include "test_support.hpp"

namespace mlh {
namespace {

using namespace std::chrono_literals;

SimulatedBackendConfig constant_backend(Nanos latency, TraceLevel level = TraceLevel::Model) {
  SimulatedBackendConfig cfg;
  cfg.latency = LatencyModel::constant(latency);
  cfg.emit_level = level;
  cfg.layer_plan = parse_layer_plan("conv:0.6:0.5/0.5,fc:0.3:1,softmax:0.1");
  return cfg;
}

std::vector<Tensor> scalars(int n) {
  std::vector<Tensor> out;
  for (int i = 0; i < n; ++i) out.push_back(Tensor::scalar<std::int32_t>(i));
  return out;
}

TEST(DatasetStore, CacheLifecycle) {
  DatasetStore store(scalars(3));
  EXPECT_EQ(store.size(), 3u);
  EXPECT_ERRC(store.sample(3), Errc::IndexOutOfRange);
  EXPECT_ERRC(store.cached(1), Errc::NotLoaded);
  store.put(1, {Tensor::scalar<float>(1)});
  EXPECT_TRUE(store.is_loaded(1));
  EXPECT_EQ(store.loaded_count(), 1u);
  store.erase(1);
  store.erase(2);
  EXPECT_EQ(store.loaded_count(), 0u);
  EXPECT_ERRC(DatasetStore(scalars(3), std::vector<std::int64_t>{1, 2}), Errc::LengthMismatch);
}

TEST(DatasetFiles, RoundTripAndCorruption) {
  test::TempDir dir;
  std::mt19937_64 rng(4);
  std::vector<Tensor> samples;
  for (int i = 0; i < 20; ++i) samples.push_back(test::random_tensor(rng, static_cast<ElementType>(rng() % 7)));
  write_dataset(dir / "d.bin", samples);
  EXPECT_EQ(read_dataset(dir / "d.bin"), samples);
  const std::vector<std::int64_t> labels{0, -1, 7, 1ll << 40};
  write_labels(dir / "l.bin", labels);
  EXPECT_EQ(read_labels(dir / "l.bin"), labels);

  auto bytes = test::read_bytes(dir / "d.bin");
  bytes.push_back(0);
  std::ofstream(dir / "d2.bin", std::ios::binary).write(reinterpret_cast<const char*>(bytes.data()),
                                                        static_cast<std::streamsize>(bytes.size()));
  EXPECT_ERRC(read_dataset(dir / "d2.bin"), Errc::LengthMismatch);
  bytes.resize(bytes.size() / 2);
  std::ofstream(dir / "d3.bin", std::ios::binary | std::ios::trunc)
      .write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  EXPECT_THROW(read_dataset(dir / "d3.bin"), Error);
  test::write_text(dir / "l2.bin", "abc");
  EXPECT_ERRC(read_labels(dir / "l2.bin"), Errc::LengthMismatch);
  EXPECT_ERRC(read_dataset(dir / "missing.bin"), Errc::IoError);
}

TEST(SyntheticDataset, DeterministicAndInRange) {
  const auto a = generate_synthetic_dataset(30, 5, 6, 3, 7, 42);
  const auto b = generate_synthetic_dataset(30, 5, 6, 3, 7, 42);
  const auto c = generate_synthetic_dataset(30, 5, 6, 3, 7, 43);
  EXPECT_EQ(a.samples, b.samples);
  EXPECT_EQ(a.labels, b.labels);
  EXPECT_NE(a.samples, c.samples);
  for (const auto& s : a.samples) {
    EXPECT_EQ(s.shape(), (Shape{5, 6, 3}));
    EXPECT_EQ(s.dtype(), ElementType::UInt8);
  }
  for (auto l : a.labels) EXPECT_TRUE(l >= 0 && l < 7);
  EXPECT_ERRC(generate_synthetic_dataset(3, 1, 1, 1, 0, 1), Errc::ConfigError);
}

TEST(Parsing, Durations) {
  EXPECT_EQ(parse_duration("10ms"), Nanos{10'000'000});
  EXPECT_EQ(parse_duration("2.5us"), Nanos{2500});
  EXPECT_EQ(parse_duration("1s"), Nanos{1'000'000'000});
  EXPECT_EQ(parse_duration("0ns"), Nanos{0});
  for (const char* bad : {"10", "ms", "-1ms", "1h", "1.x ms", ""}) {
    EXPECT_ERRC(parse_duration(bad), Errc::ConfigError) << bad;
  }
}

TEST(Parsing, LatencyModels) {
  EXPECT_EQ(LatencyModel::parse("constant:10ms").a, Nanos{10ms});
  const auto u = LatencyModel::parse("uniform:5ms:15ms");
  EXPECT_EQ(u.kind, LatencyModel::Kind::Uniform);
  EXPECT_EQ(u.b, Nanos{15ms});
  EXPECT_EQ(LatencyModel::parse("exponential:5ms").kind, LatencyModel::Kind::Exponential);
  EXPECT_ERRC(LatencyModel::parse("uniform:15ms:5ms"), Errc::ConfigError);
  EXPECT_ERRC(LatencyModel::parse("gamma:1ms"), Errc::ConfigError);
  for (const char* s : {"constant:10ms", "uniform:5ms:15ms", "exponential:5ms"}) {
    const auto m = LatencyModel::parse(s);
    const auto again = LatencyModel::parse(m.describe());
    EXPECT_EQ(again.kind, m.kind);
    EXPECT_EQ(again.a, m.a);
  }
}

TEST(LatencyModel, DrawsStayInSupport) {
  Rng rng(1);
  const auto u = LatencyModel::uniform(Nanos{5}, Nanos{8});
  std::array<int, 4> hits{};
  for (int i = 0; i < 4000; ++i) {
    const auto d = u.draw(rng).count();
    ASSERT_TRUE(d >= 5 && d <= 8);
    ++hits[static_cast<std::size_t>(d - 5)];
  }
  for (auto h : hits) EXPECT_GT(h, 800);
  const auto e = LatencyModel::exponential(Nanos{1'000'000});
  double sum = 0;
  for (int i = 0; i < 20000; ++i) sum += static_cast<double>(e.draw(rng).count());
  EXPECT_NEAR(sum / 20000, 1e6, 3e4);
  EXPECT_EQ(LatencyModel::constant(Nanos{7}).draw(rng), Nanos{7});
}

TEST(Parsing, BehaviorAndLayerPlan) {
  EXPECT_EQ(BackendBehavior::parse("identity").kind, BackendBehavior::Kind::Identity);
  EXPECT_EQ(BackendBehavior::parse("lookup_label").kind, BackendBehavior::Kind::LookupLabel);
  EXPECT_DOUBLE_EQ(BackendBehavior::parse("corrupted_lookup:0.1").error_rate, 0.1);
  EXPECT_ERRC(BackendBehavior::parse("corrupted_lookup:1.5"), Errc::ConfigError);
  EXPECT_ERRC(BackendBehavior::parse("oracle"), Errc::ConfigError);

  const auto plan = parse_layer_plan("conv:0.6:0.5/0.5,fc:0.4");
  ASSERT_EQ(plan.size(), 2u);
  EXPECT_EQ(plan[0].name, "conv");
  EXPECT_EQ(plan[0].kernel_fractions, (std::vector<double>{0.5, 0.5}));
  EXPECT_TRUE(plan[1].kernel_fractions.empty());
  EXPECT_ERRC(parse_layer_plan("conv:0.6,fc:0.3"), Errc::ConfigError);
  EXPECT_ERRC(parse_layer_plan("conv:0.6:0.5/0.4,fc:0.4"), Errc::ConfigError);
  EXPECT_ERRC(parse_layer_plan("conv"), Errc::ConfigError);
  EXPECT_ERRC(parse_layer_plan("conv:-0.5,fc:1.5"), Errc::ConfigError);
}

TEST(SimulatedBackendConfig, Validation) {
  auto cfg = constant_backend(1ms);
  EXPECT_NO_THROW(cfg.validate());
  cfg.max_concurrency = 0;
  EXPECT_ERRC(cfg.validate(), Errc::ConfigError);
  cfg.max_concurrency = 1;
  cfg.behavior = BackendBehavior::parse("lookup_label");
  EXPECT_ERRC(cfg.validate(), Errc::ConfigError);
  cfg.num_classes = 3;
  cfg.label_table = {0, 3};
  EXPECT_ERRC(cfg.validate(), Errc::ConfigError);
  cfg.label_table = {0, 2};
  EXPECT_NO_THROW(cfg.validate());
  cfg.layer_plan[1].fraction = 0.5;  // built in code, not parsed
  EXPECT_ERRC(cfg.validate(), Errc::ConfigError);
  cfg.layer_plan[1].fraction = 0.3;
  EXPECT_NE(cfg.describe().find("layers=3"), std::string::npos);
}

// Property: at every level the spans tile the model span exactly.
TEST(SimulatedInferProperty, SpansAbutAndTileTheModel) {
  std::mt19937_64 gen(8);
  for (int c = 0; c < 200; ++c) {
    auto cfg = constant_backend(Nanos{static_cast<std::int64_t>(gen() % 50'000'000)}, TraceLevel::Kernel);
    cfg.profiling_overhead_per_span = Nanos{static_cast<std::int64_t>(gen() % 1000)};
    SimulatedRng rng(c);
    VirtualClock clock(Nanos{static_cast<std::int64_t>(gen() % 1'000'000)});
    const auto t0 = clock.now();
    const auto r = simulated_infer(cfg, {}, 0, clock, rng);
    // model + 3 layers + 3 kernels (2 + 1 + 0)
    ASSERT_EQ(r.spans.size(), 7u);
    const auto& model = r.spans[0];
    EXPECT_EQ(model.start, t0);
    EXPECT_EQ(model.end, clock.now());
    EXPECT_EQ(model.duration(), cfg.latency.a + 6 * cfg.profiling_overhead_per_span);
    std::vector<const Span*> layers, kernels;
    for (const auto& s : r.spans) {
      if (s.level == TraceLevel::Layer) layers.push_back(&s);
      if (s.level == TraceLevel::Kernel) kernels.push_back(&s);
    }
    ASSERT_EQ(layers.size(), 3u);
    EXPECT_EQ(layers.front()->start, model.start);
    EXPECT_EQ(layers.back()->end, model.end);
    for (std::size_t i = 1; i < layers.size(); ++i) EXPECT_EQ(layers[i]->start, layers[i - 1]->end);
    EXPECT_EQ(kernels[0]->start, layers[0]->start);
    EXPECT_EQ(kernels[0]->end, kernels[1]->start);
    EXPECT_EQ(kernels[1]->end, layers[0]->end);
    EXPECT_EQ(kernels[2]->name, "fc/kernel0");
    EXPECT_EQ(kernels[2]->start, layers[1]->start);
    EXPECT_EQ(kernels[2]->end, layers[1]->end);
  }
}

TEST(SimulatedInfer, ModelLevelEmitsOneSpanAndNoOverhead) {
  auto cfg = constant_backend(10ms);
  cfg.profiling_overhead_per_span = 1ms;
  SimulatedRng rng(0);
  VirtualClock clock;
  const TensorList in{Tensor::scalar<float>(3)};
  const auto r = simulated_infer(cfg, in, 0, clock, rng);
  EXPECT_EQ(r.spans.size(), 1u);
  EXPECT_EQ(clock.now(), Nanos{10ms});
  EXPECT_EQ(r.outputs, in);
}

TEST(SimulatedInfer, LookupAndCorruption) {
  auto cfg = constant_backend(1ms);
  cfg.behavior = BackendBehavior::parse("corrupted_lookup:1");
  cfg.num_classes = 4;
  cfg.label_table = {3, 1};
  SimulatedRng rng(0);
  VirtualClock clock;
  const auto r = simulated_infer(cfg, {}, 0, clock, rng);
  ASSERT_EQ(r.outputs.size(), 1u);
  EXPECT_EQ(r.outputs[0].shape(), (Shape{1, 4}));
  EXPECT_EQ(r.outputs[0].values<float>()[0], 1.0f);  // (3 + 1) % 4
  cfg.behavior = BackendBehavior::parse("lookup_label");
  EXPECT_EQ(simulated_infer(cfg, {}, 1, clock, rng).outputs[0].values<float>()[1], 1.0f);
  EXPECT_ERRC(simulated_infer(cfg, {}, 2, clock, rng), Errc::IndexOutOfRange);
}

class SutFixture : public ::testing::Test {
 protected:
  SutFixture()
      : store(scalars(5)),
        pipeline(make_inprocess_pipeline([this](HookId h, const Ctx&, std::optional<TensorList> d, Clock& c) {
          if (h == HookId::Preprocess) c.sleep_for(pre_cost);
          if (h == HookId::Postprocess) c.sleep_for(post_cost);
          return d;
        })),
        backend(constant_backend(10ms, TraceLevel::Layer)),
        trace("run", TraceLevel::Layer),
        sut(store, *pipeline, backend, &trace, "run") {
    pipeline->start(clock);
  }
  ~SutFixture() override { pipeline->stop(clock); }

  Nanos pre_cost{3ms};
  Nanos post_cost{2ms};
  VirtualClock clock;
  DatasetStore store;
  std::unique_ptr<Pipeline> pipeline;
  SimulatedBackend backend;
  TraceRecorder trace;
  Sut sut;
};

TEST_F(SutFixture, IssueRequiresLoadedSamples) {
  const std::vector<QuerySample> q{{0, 2}};
  EXPECT_ERRC(sut.issue_query(q, clock), Errc::NotLoaded);
  const std::vector<std::size_t> bad{9};
  EXPECT_ERRC(sut.load_query_samples(bad, clock), Errc::IndexOutOfRange);
}

TEST_F(SutFixture, TimestampsAndPreprocessAccounting) {
  const std::vector<std::size_t> idx{0, 1, 2, 1};
  sut.load_query_samples(idx, clock);
  EXPECT_EQ(store.loaded_count(), 3u);
  EXPECT_EQ(sut.preprocess_time(), Nanos{9ms});  // the repeated index is not reloaded
  const auto start = clock.now();
  const std::vector<QuerySample> q{{7, 0}, {7, 2}};
  const auto rs = sut.issue_query(q, clock);
  ASSERT_EQ(rs.size(), 2u);
  EXPECT_EQ(rs[0].t_issue, start);
  EXPECT_EQ(rs[0].t_model_start, start);
  EXPECT_EQ(rs[0].t_model_end, start + 10ms);
  EXPECT_EQ(rs[0].t_post_end, start + 12ms);
  EXPECT_EQ(rs[1].t_model_start, start + 12ms);
  EXPECT_EQ(rs[1].t_post_end, start + 24ms);
  EXPECT_EQ(rs[1].outputs, TensorList{Tensor::scalar<std::int32_t>(2)});
  EXPECT_EQ(sut.preprocess_time(), Nanos{9ms});

  const auto spans = trace.snapshot().spans;
  ASSERT_EQ(spans.size(), 8u);  // 2 x (model + 3 layers)
  EXPECT_EQ(spans[0].attributes.at("query_id"), "7");
  EXPECT_EQ(spans[0].run_id, "run");

  sut.unload_query_samples(idx);
  EXPECT_EQ(store.loaded_count(), 0u);
}

TEST_F(SutFixture, IssuedAtIsClampedToNow) {
  const std::vector<std::size_t> idx{0};
  sut.load_query_samples(idx, clock);
  const auto now = clock.now();
  const std::vector<QuerySample> q{{1, 0}};
  EXPECT_EQ(sut.issue_query(q, clock, now - 4ms)[0].t_issue, now - 4ms);
  const auto later = clock.now();
  EXPECT_EQ(sut.issue_query(q, clock, later + 1s)[0].t_issue, later);
}

}  // namespace
}  // namespace mlh
