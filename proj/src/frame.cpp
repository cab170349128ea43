#include "mlharness/frame.hpp"

#include <array>
#include <limits>
#include <string>

namespace mlh {

namespace {

constexpr std::array<std::string_view, kHookCount> kHookNames = {
    "before_preprocess",  "preprocess",  "after_preprocess",
    "before_postprocess", "postprocess", "after_postprocess"};

template <typename T>
T read_le(std::span<const std::uint8_t> b) {
  T v = 0;
  for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(b[i]) << (8 * i);
  return v;
}

void put_bytes(std::vector<std::uint8_t>& out, std::string_view s) {
  put_u32(out, static_cast<std::uint32_t>(s.size()));
  out.insert(out.end(), s.begin(), s.end());
}

std::string read_string(ByteReader& in) {
  const auto len = in.u32();
  const auto b = in.take(len);
  return {b.begin(), b.end()};
}

}  // namespace

std::string_view hook_name(HookId hook) noexcept {
  return kHookNames[static_cast<std::size_t>(hook)];
}

std::optional<HookId> hook_from_code(std::uint8_t code) noexcept {
  if (code >= kHookCount) return std::nullopt;
  return static_cast<HookId>(code);
}

std::uint8_t ByteReader::u8() { return take(1)[0]; }
std::uint32_t ByteReader::u32() { return read_le<std::uint32_t>(take(4)); }
std::uint64_t ByteReader::u64() { return read_le<std::uint64_t>(take(8)); }

std::span<const std::uint8_t> ByteReader::take(std::uint64_t n) {
  if (n > remaining()) {
    fail(Errc::TruncatedFrame, "need " + std::to_string(n) + " bytes at offset " +
                                   std::to_string(pos_) + ", have " +
                                   std::to_string(remaining()));
  }
  auto out = bytes_.subspan(pos_, static_cast<std::size_t>(n));
  pos_ += static_cast<std::size_t>(n);
  return out;
}

void put_u8(std::vector<std::uint8_t>& out, std::uint8_t v) { out.push_back(v); }

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void append_tensor(std::vector<std::uint8_t>& out, const Tensor& t) {
  put_u8(out, static_cast<std::uint8_t>(t.dtype()));
  put_u8(out, static_cast<std::uint8_t>(t.rank()));
  for (auto d : t.shape()) put_u64(out, d);
  if (t.dtype() == ElementType::String) {
    for (const auto& s : t.strings()) put_bytes(out, s);
  } else {
    const auto b = t.bytes();
    out.insert(out.end(), b.begin(), b.end());
  }
}

Tensor read_tensor(ByteReader& in) {
  const auto code = in.u8();
  const auto dtype = element_type_from_code(code);
  if (!dtype) fail(Errc::UnknownDtypeCode, "unknown dtype code " + std::to_string(code));
  const auto rank = in.u8();
  Shape shape(rank);
  std::uint64_t count = 1;
  bool overflow = false;
  for (auto& d : shape) {
    d = in.u64();
    if (d != 0 && count > std::numeric_limits<std::uint64_t>::max() / d) overflow = true;
    count *= d;
  }
  if (*dtype == ElementType::String) {
    // Each element needs at least its 4-byte length prefix.
    if (overflow || count > in.remaining() / 4) {
      fail(Errc::TruncatedFrame, "string tensor extends past end of frame");
    }
    std::vector<std::string> strings;
    strings.reserve(count);
    for (std::uint64_t i = 0; i < count; ++i) strings.push_back(read_string(in));
    return Tensor::from_strings(std::move(shape), std::move(strings));
  }
  const auto width = element_width(*dtype);
  if (overflow || count > in.remaining() / width) {
    fail(Errc::TruncatedFrame, "tensor data extends past end of frame");
  }
  const auto data = in.take(count * width);
  return Tensor::from_bytes(*dtype, std::move(shape), {data.begin(), data.end()});
}

std::vector<std::uint8_t> encode_frame(std::span<const Tensor> tensors, const Ctx& ctx,
                                       HookId hook) {
  if (tensors.size() > std::numeric_limits<std::uint8_t>::max()) {
    fail(Errc::LengthMismatch, "a frame carries at most 255 tensors");
  }
  std::vector<std::uint8_t> out(4, 0);  // length prefix, patched below
  put_u8(out, static_cast<std::uint8_t>(hook));
  put_u8(out, static_cast<std::uint8_t>(tensors.size()));
  put_u32(out, static_cast<std::uint32_t>(ctx.size()));
  for (const auto& [k, v] : ctx) {
    put_bytes(out, k);
    put_bytes(out, v);
  }
  for (const auto& t : tensors) append_tensor(out, t);

  const auto payload = out.size() - 4;
  if (payload > std::numeric_limits<std::uint32_t>::max()) {
    fail(Errc::LengthMismatch, "frame payload exceeds 4 GiB");
  }
  for (int i = 0; i < 4; ++i) out[i] = static_cast<std::uint8_t>(payload >> (8 * i));
  return out;
}

Frame decode_frame(std::span<const std::uint8_t> bytes) {
  ByteReader prefix(bytes);
  const auto declared = prefix.u32();
  if (bytes.size() - 4 < declared) {
    fail(Errc::TruncatedFrame, "frame declares " + std::to_string(declared) +
                                   " payload bytes, " + std::to_string(bytes.size() - 4) +
                                   " present");
  }
  if (bytes.size() - 4 > declared) {
    fail(Errc::LengthMismatch, "trailing bytes after declared payload");
  }

  ByteReader in(bytes.subspan(4));
  Frame frame;
  const auto hook_code = in.u8();
  const auto hook = hook_from_code(hook_code);
  if (!hook) fail(Errc::UnknownHookId, "unknown hook id " + std::to_string(hook_code));
  frame.hook = *hook;

  const auto tensor_count = in.u8();
  const auto ctx_count = in.u32();
  for (std::uint32_t i = 0; i < ctx_count; ++i) {
    auto key = read_string(in);
    auto value = read_string(in);
    if (!frame.ctx.emplace(std::move(key), std::move(value)).second) {
      fail(Errc::LengthMismatch, "duplicate ctx key in frame");
    }
  }
  frame.tensors.reserve(tensor_count);
  for (std::uint8_t i = 0; i < tensor_count; ++i) frame.tensors.push_back(read_tensor(in));

  if (in.remaining() != 0) {
    fail(Errc::LengthMismatch, std::to_string(in.remaining()) +
                                   " payload bytes left after the last tensor");
  }
  return frame;
}

}  // namespace mlh
