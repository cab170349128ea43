#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "mlharness/tensor.hpp"

namespace mlh {

// The six processing entry points, numbered as on the wire.
enum class HookId : std::uint8_t {
  BeforePreprocess = 0,
  Preprocess = 1,
  AfterPreprocess = 2,
  BeforePostprocess = 3,
  Postprocess = 4,
  AfterPostprocess = 5,
};

inline constexpr std::uint8_t kHookCount = 6;

std::string_view hook_name(HookId hook) noexcept;
std::optional<HookId> hook_from_code(std::uint8_t code) noexcept;

// Only preprocess and postprocess carry tensor data.
constexpr bool hook_carries_data(HookId hook) noexcept {
  return hook == HookId::Preprocess || hook == HookId::Postprocess;
}

struct Frame {
  HookId hook = HookId::BeforePreprocess;
  TensorList tensors;
  Ctx ctx;

  friend bool operator==(const Frame&, const Frame&) = default;
};

// Frame layout, all integers little-endian:
//   u32 payload_length | u8 hook | u8 tensor_count | u32 ctx_count
//   | ctx entries (u32 len, key, u32 len, value)
//   | tensors (u8 dtype, u8 rank, rank x u64 dims, data)
// Numeric data is the raw row-major buffer; string elements are u32 len + bytes.
std::vector<std::uint8_t> encode_frame(std::span<const Tensor> tensors, const Ctx& ctx,
                                       HookId hook);

// Inverse of encode_frame. `bytes` must hold exactly one frame including the
// length prefix.
Frame decode_frame(std::span<const std::uint8_t> bytes);

// Cursor over a byte buffer; every read past the end throws TruncatedFrame.
class ByteReader {
 public:
  explicit ByteReader(std::span<const std::uint8_t> bytes) : bytes_(bytes) {}

  std::uint8_t u8();
  std::uint32_t u32();
  std::uint64_t u64();
  std::span<const std::uint8_t> take(std::uint64_t n);

  std::size_t position() const noexcept { return pos_; }
  std::size_t remaining() const noexcept { return bytes_.size() - pos_; }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

void put_u8(std::vector<std::uint8_t>& out, std::uint8_t v);
void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v);
void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v);

// The per-tensor section of the frame layout, shared with the dataset file.
void append_tensor(std::vector<std::uint8_t>& out, const Tensor& t);
Tensor read_tensor(ByteReader& in);

}  // namespace mlh
