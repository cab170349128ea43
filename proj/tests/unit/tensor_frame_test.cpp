#include "oracles.hpp"

namespace mlh {
namespace {

using test::random_tensor;

constexpr ElementType kAllTypes[] = {ElementType::UInt8,   ElementType::Int8,    ElementType::Int32,
                                     ElementType::Int64,   ElementType::Float32, ElementType::Float64,
                                     ElementType::String};

TEST(Tensor, ElementWidths) {
  EXPECT_EQ(element_width(ElementType::UInt8), 1u);
  EXPECT_EQ(element_width(ElementType::Int8), 1u);
  EXPECT_EQ(element_width(ElementType::Int32), 4u);
  EXPECT_EQ(element_width(ElementType::Float32), 4u);
  EXPECT_EQ(element_width(ElementType::Int64), 8u);
  EXPECT_EQ(element_width(ElementType::Float64), 8u);
  EXPECT_EQ(element_width(ElementType::String), 0u);
}

TEST(Tensor, NamesAndCodesRoundTrip) {
  for (auto t : kAllTypes) {
    EXPECT_EQ(element_type_from_name(element_type_name(t)), t);
    EXPECT_EQ(element_type_from_code(static_cast<std::uint8_t>(t)), t);
  }
  EXPECT_FALSE(element_type_from_code(7));
  EXPECT_FALSE(element_type_from_name("bfloat16"));
}

TEST(Tensor, ScalarShapeHasOneElement) {
  EXPECT_EQ(element_count({}), 1u);
  EXPECT_EQ(element_count({2, 0, 3}), 0u);
  EXPECT_EQ(element_count({2, 3, 4}), 24u);
  const auto s = Tensor::scalar<double>(2.5);
  EXPECT_EQ(s.rank(), 0u);
  EXPECT_EQ(s.values<double>()[0], 2.5);
}

TEST(Tensor, RowMajorStrides) {
  EXPECT_EQ(row_major_strides({2, 3, 4}), (std::vector<std::uint64_t>{12, 4, 1}));
  EXPECT_TRUE(row_major_strides({}).empty());
}

TEST(Tensor, FromBytesChecksSize) {
  EXPECT_ERRC(Tensor::from_bytes(ElementType::Float32, {2}, std::vector<std::uint8_t>(7)),
              Errc::SizeMismatch);
  EXPECT_NO_THROW(Tensor::from_bytes(ElementType::Float32, {2}, std::vector<std::uint8_t>(8)));
}

TEST(Tensor, ValuesCheckDtype) {
  const auto t = Tensor::from_values<float>({2}, std::vector<float>{1, 2});
  EXPECT_ERRC(t.values<double>(), Errc::ShapeMismatch);
}

TEST(Tensor, EqualityIsBitwise) {
  const float nan = std::numeric_limits<float>::quiet_NaN();
  const auto a = Tensor::from_values<float>({1}, std::vector<float>{nan});
  const auto b = Tensor::from_values<float>({1}, std::vector<float>{nan});
  EXPECT_EQ(a, b);
  const auto z = Tensor::from_values<float>({1}, std::vector<float>{0.0f});
  const auto nz = Tensor::from_values<float>({1}, std::vector<float>{-0.0f});
  EXPECT_NE(z, nz);
}

// Brute-force index arithmetic for NHWC <-> NCHW.
TEST(Tensor, LayoutConvertMatchesIndexOracle) {
  std::mt19937_64 rng(7);
  const Shape nhwc{2, 3, 4, 5};
  std::vector<std::int32_t> v(element_count(nhwc));
  for (auto& x : v) x = static_cast<std::int32_t>(rng());
  const auto t = Tensor::from_values<std::int32_t>(nhwc, v);
  const auto c = layout_convert(t, Layout::NHWC, Layout::NCHW);
  ASSERT_EQ(c.shape(), (Shape{2, 5, 3, 4}));
  const auto out = c.values<std::int32_t>();
  for (std::size_t n = 0; n < 2; ++n)
    for (std::size_t h = 0; h < 3; ++h)
      for (std::size_t w = 0; w < 4; ++w)
        for (std::size_t ch = 0; ch < 5; ++ch) {
          EXPECT_EQ(out[((n * 5 + ch) * 3 + h) * 4 + w], v[((n * 3 + h) * 4 + w) * 5 + ch]);
        }
  EXPECT_EQ(layout_convert(c, Layout::NCHW, Layout::NHWC), t);
  EXPECT_EQ(layout_convert(t, Layout::NHWC, Layout::NHWC), t);
}

TEST(Tensor, LayoutConvertNeedsRankFour) {
  EXPECT_ERRC(layout_convert(Tensor(ElementType::Float32, {2, 3, 4}), Layout::NHWC, Layout::NCHW),
              Errc::RankError);
}

TEST(Frame, HookCodes) {
  for (std::uint8_t c = 0; c < kHookCount; ++c) {
    const auto h = hook_from_code(c);
    ASSERT_TRUE(h);
    EXPECT_EQ(static_cast<std::uint8_t>(*h), c);
  }
  EXPECT_FALSE(hook_from_code(6));
  EXPECT_TRUE(hook_carries_data(HookId::Preprocess));
  EXPECT_TRUE(hook_carries_data(HookId::Postprocess));
  EXPECT_FALSE(hook_carries_data(HookId::BeforePreprocess));
}

TEST(Frame, EmptyFrameLayout) {
  const auto bytes = encode_frame({}, {}, HookId::AfterPostprocess);
  const std::vector<std::uint8_t> expected{6, 0, 0, 0, 5, 0, 0, 0, 0, 0};
  EXPECT_EQ(bytes, expected);
}

TEST(Frame, TruncationAtEveryOffsetIsDetected) {
  const TensorList ts{Tensor::from_values<float>({2}, std::vector<float>{1, 2}),
                      Tensor::from_strings({1}, {"abc"})};
  const auto bytes = encode_frame(ts, {{"k", "v"}}, HookId::Postprocess);
  for (std::size_t n = 0; n < bytes.size(); ++n) {
    EXPECT_ERRC(decode_frame(std::span(bytes.data(), n)), Errc::TruncatedFrame) << "prefix " << n;
  }
}

TEST(Frame, TrailingBytesAreRejected) {
  auto bytes = encode_frame({}, {}, HookId::Preprocess);
  bytes.push_back(0);
  EXPECT_ERRC(decode_frame(bytes), Errc::LengthMismatch);
}

TEST(Frame, PayloadLongerThanContentIsRejected) {
  auto bytes = encode_frame({}, {}, HookId::Preprocess);
  bytes.push_back(0);
  bytes[0] += 1;  // the length prefix now covers the extra byte
  EXPECT_ERRC(decode_frame(bytes), Errc::LengthMismatch);
}

TEST(Frame, UnknownCodesAreRejected) {
  auto bytes = encode_frame({}, {}, HookId::Preprocess);
  bytes[4] = 6;
  EXPECT_ERRC(decode_frame(bytes), Errc::UnknownHookId);
  auto t = encode_frame(TensorList{Tensor::scalar<float>(1)}, {}, HookId::Preprocess);
  t[10] = 7;
  EXPECT_ERRC(decode_frame(t), Errc::UnknownDtypeCode);
}

TEST(Frame, HugeDimsDoNotAllocate) {
  std::vector<std::uint8_t> body{1, 1, 0, 0, 0, 0, 4, 2};
  for (int d = 0; d < 2; ++d) put_u64(body, 1ull << 40);
  std::vector<std::uint8_t> bytes;
  put_u32(bytes, static_cast<std::uint32_t>(body.size()));
  bytes.insert(bytes.end(), body.begin(), body.end());
  EXPECT_ERRC(decode_frame(bytes), Errc::TruncatedFrame);
}

TEST(Frame, TooManyTensors) {
  const TensorList many(256, Tensor::scalar<std::uint8_t>(0));
  EXPECT_ERRC(encode_frame(many, {}, HookId::Preprocess), Errc::LengthMismatch);
}

// Property: encode/decode is a bijection on well-formed frames.
TEST(FrameProperty, RandomRoundTripsAreBitExact) {
  std::mt19937_64 rng(20240611);
  std::uniform_int_distribution<int> count_d(0, 4);
  std::uniform_int_distribution<int> hook_d(0, 5);
  std::uniform_int_distribution<int> type_d(0, 6);
  std::array<int, kElementTypeCount> seen{};
  for (int i = 0; i < 1500; ++i) {
    TensorList ts;
    for (int k = count_d(rng); k > 0; --k) {
      const auto dtype = static_cast<ElementType>(type_d(rng));
      ++seen[static_cast<std::size_t>(dtype)];
      ts.push_back(random_tensor(rng, dtype));
    }
    Ctx ctx;
    for (int k = count_d(rng); k > 0; --k) ctx["key" + std::to_string(rng() % 100)] = std::to_string(rng());
    const auto hook = static_cast<HookId>(hook_d(rng));
    const auto bytes = encode_frame(ts, ctx, hook);
    const auto f = decode_frame(bytes);
    ASSERT_EQ(f.hook, hook);
    ASSERT_EQ(f.ctx, ctx);
    ASSERT_EQ(f.tensors, ts);
    ASSERT_EQ(encode_frame(f.tensors, f.ctx, f.hook), bytes);
  }
  for (auto n : seen) EXPECT_GT(n, 0);
}

// Vectors packed by an independent Python encoder.
TEST(Conformance, ValidVectorsDecodeAndReencode) {
  const auto vectors = test::valid_vectors();
  ASSERT_GE(vectors.size(), 10u);
  for (const auto& v : vectors) {
    SCOPED_TRACE(v.file);
    ASSERT_FALSE(v.bytes.empty());
    EXPECT_EQ(decode_frame(v.bytes), v.expected);
    EXPECT_EQ(encode_frame(v.expected.tensors, v.expected.ctx, v.expected.hook), v.bytes);
  }
}

TEST(Conformance, InvalidVectorsFailWithTheirCode) {
  const auto vectors = test::invalid_vectors();
  ASSERT_GE(vectors.size(), 4u);
  for (const auto& v : vectors) {
    SCOPED_TRACE(v.file);
    try {
      decode_frame(v.bytes);
      ADD_FAILURE() << "decoded an invalid vector";
    } catch (const Error& e) {
      EXPECT_EQ(errc_name(e.code()), v.error);
    }
  }
}

}  // namespace
}  // namespace mlh
