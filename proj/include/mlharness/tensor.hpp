#pragma once

#include <bit>
#include <cstddef>
#include <cstdint>
#include <cstring>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

#include "mlharness/error.hpp"

namespace mlh {

static_assert(std::endian::native == std::endian::little,
              "tensor payloads are copied raw; a little-endian host is required");

enum class ElementType : std::uint8_t {
  UInt8 = 0,
  Int8 = 1,
  Int32 = 2,
  Int64 = 3,
  Float32 = 4,
  Float64 = 5,
  String = 6,
};

inline constexpr std::uint8_t kElementTypeCount = 7;

// Byte width of one element; 0 for String (variable length).
constexpr std::size_t element_width(ElementType t) noexcept {
  switch (t) {
    case ElementType::UInt8:
    case ElementType::Int8:
      return 1;
    case ElementType::Int32:
    case ElementType::Float32:
      return 4;
    case ElementType::Int64:
    case ElementType::Float64:
      return 8;
    case ElementType::String:
      return 0;
  }
  return 0;
}

std::string_view element_type_name(ElementType t) noexcept;
std::optional<ElementType> element_type_from_name(std::string_view name) noexcept;
std::optional<ElementType> element_type_from_code(std::uint8_t code) noexcept;

template <typename T>
struct element_type_of;
template <> struct element_type_of<std::uint8_t> { static constexpr auto value = ElementType::UInt8; };
template <> struct element_type_of<std::int8_t> { static constexpr auto value = ElementType::Int8; };
template <> struct element_type_of<std::int32_t> { static constexpr auto value = ElementType::Int32; };
template <> struct element_type_of<std::int64_t> { static constexpr auto value = ElementType::Int64; };
template <> struct element_type_of<float> { static constexpr auto value = ElementType::Float32; };
template <> struct element_type_of<double> { static constexpr auto value = ElementType::Float64; };

template <typename T>
inline constexpr ElementType element_type_v = element_type_of<T>::value;

using Shape = std::vector<std::uint64_t>;

// Product of the extents; the scalar shape [] has one element.
std::uint64_t element_count(const Shape& shape) noexcept;

// Row-major strides, in elements.
std::vector<std::uint64_t> row_major_strides(const Shape& shape);

// Auxiliary string configuration handed to processing hooks.
using Ctx = std::map<std::string, std::string, std::less<>>;

// A dense row-major tensor. Numeric payloads live in one contiguous byte
// buffer; string tensors hold one byte string per element.
class Tensor {
 public:
  Tensor() = default;

  // Zero-filled numeric tensor (or empty strings for String).
  Tensor(ElementType dtype, Shape shape);

  static Tensor from_bytes(ElementType dtype, Shape shape,
                           std::vector<std::uint8_t> bytes);
  static Tensor from_strings(Shape shape, std::vector<std::string> strings);

  template <typename T>
  static Tensor from_values(Shape shape, std::span<const T> values) {
    Tensor t(element_type_v<T>, std::move(shape));
    if (values.size() != t.element_count()) {
      fail(Errc::ShapeMismatch, "value count does not match shape");
    }
    if (!values.empty()) {
      std::memcpy(t.bytes_.data(), values.data(), values.size_bytes());
    }
    return t;
  }

  template <typename T>
  static Tensor from_values(Shape shape, const std::vector<T>& values) {
    return from_values<T>(std::move(shape), std::span<const T>(values));
  }

  template <typename T>
  static Tensor scalar(T value) {
    return from_values<T>(Shape{}, std::span<const T>(&value, 1));
  }

  ElementType dtype() const noexcept { return dtype_; }
  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::uint64_t element_count() const noexcept { return mlh::element_count(shape_); }

  std::span<const std::uint8_t> bytes() const noexcept { return bytes_; }
  std::span<std::uint8_t> mutable_bytes() noexcept { return bytes_; }
  const std::vector<std::string>& strings() const noexcept { return strings_; }

  template <typename T>
  std::span<const T> values() const {
    check_dtype(element_type_v<T>);
    return {reinterpret_cast<const T*>(bytes_.data()), bytes_.size() / sizeof(T)};
  }

  template <typename T>
  std::span<T> mutable_values() {
    check_dtype(element_type_v<T>);
    return {reinterpret_cast<T*>(bytes_.data()), bytes_.size() / sizeof(T)};
  }

  // Same element data viewed under a different shape of equal element count.
  Tensor reshaped(Shape shape) const;

  // Bit-exact comparison (NaN payloads compare by bits).
  friend bool operator==(const Tensor& a, const Tensor& b) = default;

 private:
  void check_dtype(ElementType expected) const;

  ElementType dtype_ = ElementType::Float32;
  Shape shape_;
  std::vector<std::uint8_t> bytes_;
  std::vector<std::string> strings_;
};

using TensorList = std::vector<Tensor>;

enum class Layout { NHWC, NCHW };

std::optional<Layout> layout_from_name(std::string_view name) noexcept;
std::string_view layout_name(Layout layout) noexcept;

// Physically reorders a rank-4 tensor between NHWC and NCHW.
Tensor layout_convert(const Tensor& t, Layout from, Layout to);

}  // namespace mlh
