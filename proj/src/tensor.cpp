#include "mlharness/tensor.hpp"

#include <array>

namespace mlh {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::SyntaxError: return "SyntaxError";
    case Errc::ValidationError: return "ValidationError";
    case Errc::ParseError: return "ParseError";
    case Errc::FormatError: return "FormatError";
    case Errc::FetchError: return "FetchError";
    case Errc::ChecksumMismatch: return "ChecksumMismatch";
    case Errc::RankError: return "RankError";
    case Errc::TruncatedFrame: return "TruncatedFrame";
    case Errc::UnknownDtypeCode: return "UnknownDtypeCode";
    case Errc::UnknownHookId: return "UnknownHookId";
    case Errc::LengthMismatch: return "LengthMismatch";
    case Errc::WorkerLaunchError: return "WorkerLaunchError";
    case Errc::ProtocolError: return "ProtocolError";
    case Errc::WorkerCrashed: return "WorkerCrashed";
    case Errc::HookContractError: return "HookContractError";
    case Errc::LifecycleError: return "LifecycleError";
    case Errc::SizeMismatch: return "SizeMismatch";
    case Errc::RangeError: return "RangeError";
    case Errc::DegenerateCrop: return "DegenerateCrop";
    case Errc::ShapeMismatch: return "ShapeMismatch";
    case Errc::ZeroRescale: return "ZeroRescale";
    case Errc::IndexOutOfRange: return "IndexOutOfRange";
    case Errc::NotLoaded: return "NotLoaded";
    case Errc::ConfigError: return "ConfigError";
    case Errc::EmptyInput: return "EmptyInput";
    case Errc::EmptyRun: return "EmptyRun";
    case Errc::LevelDisabled: return "LevelDisabled";
    case Errc::WorkloadMismatch: return "WorkloadMismatch";
    case Errc::IoError: return "IoError";
  }
  return "Unknown";
}

namespace {

constexpr std::array<std::string_view, kElementTypeCount> kTypeNames = {
    "uint8", "int8", "int32", "int64", "float32", "float64", "string"};

}  // namespace

std::string_view element_type_name(ElementType t) noexcept {
  return kTypeNames[static_cast<std::size_t>(t)];
}

std::optional<ElementType> element_type_from_name(std::string_view name) noexcept {
  for (std::size_t i = 0; i < kTypeNames.size(); ++i) {
    if (kTypeNames[i] == name) return static_cast<ElementType>(i);
  }
  return std::nullopt;
}

std::optional<ElementType> element_type_from_code(std::uint8_t code) noexcept {
  if (code >= kElementTypeCount) return std::nullopt;
  return static_cast<ElementType>(code);
}

std::uint64_t element_count(const Shape& shape) noexcept {
  std::uint64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::vector<std::uint64_t> row_major_strides(const Shape& shape) {
  std::vector<std::uint64_t> strides(shape.size(), 1);
  for (std::size_t i = shape.size(); i-- > 1;) {
    strides[i - 1] = strides[i] * shape[i];
  }
  return strides;
}

Tensor::Tensor(ElementType dtype, Shape shape)
    : dtype_(dtype), shape_(std::move(shape)) {
  const auto n = mlh::element_count(shape_);
  if (dtype_ == ElementType::String) {
    strings_.resize(n);
  } else {
    bytes_.resize(n * element_width(dtype_));
  }
}

Tensor Tensor::from_bytes(ElementType dtype, Shape shape,
                          std::vector<std::uint8_t> bytes) {
  if (dtype == ElementType::String) {
    fail(Errc::ShapeMismatch, "string tensors are built from strings, not bytes");
  }
  Tensor t;
  t.dtype_ = dtype;
  t.shape_ = std::move(shape);
  if (bytes.size() != t.element_count() * element_width(dtype)) {
    fail(Errc::SizeMismatch, "byte length " + std::to_string(bytes.size()) +
                                 " does not match shape for " +
                                 std::string(element_type_name(dtype)));
  }
  t.bytes_ = std::move(bytes);
  return t;
}

Tensor Tensor::from_strings(Shape shape, std::vector<std::string> strings) {
  Tensor t;
  t.dtype_ = ElementType::String;
  t.shape_ = std::move(shape);
  if (strings.size() != t.element_count()) {
    fail(Errc::SizeMismatch, "string count does not match shape");
  }
  t.strings_ = std::move(strings);
  return t;
}

Tensor Tensor::reshaped(Shape shape) const {
  if (mlh::element_count(shape) != element_count()) {
    fail(Errc::ShapeMismatch, "reshape changes element count");
  }
  Tensor t = *this;
  t.shape_ = std::move(shape);
  return t;
}

void Tensor::check_dtype(ElementType expected) const {
  if (dtype_ != expected) {
    fail(Errc::ShapeMismatch, "tensor holds " + std::string(element_type_name(dtype_)) +
                                  ", accessed as " +
                                  std::string(element_type_name(expected)));
  }
}

std::optional<Layout> layout_from_name(std::string_view name) noexcept {
  if (name == "NHWC") return Layout::NHWC;
  if (name == "NCHW") return Layout::NCHW;
  return std::nullopt;
}

std::string_view layout_name(Layout layout) noexcept {
  return layout == Layout::NHWC ? "NHWC" : "NCHW";
}

Tensor layout_convert(const Tensor& t, Layout from, Layout to) {
  if (t.rank() != 4) {
    fail(Errc::RankError, "layout conversion needs a rank-4 tensor, got rank " +
                              std::to_string(t.rank()));
  }
  if (from == to) return t;

  const auto& s = t.shape();
  // Axis permutation taking the source order onto the destination order.
  const std::array<std::size_t, 4> perm =
      to == Layout::NCHW ? std::array<std::size_t, 4>{0, 3, 1, 2}
                         : std::array<std::size_t, 4>{0, 2, 3, 1};
  Shape out_shape{s[perm[0]], s[perm[1]], s[perm[2]], s[perm[3]]};
  const auto in_strides = row_major_strides(s);

  Tensor out(t.dtype(), out_shape);
  const std::size_t width = element_width(t.dtype());
  const auto src = t.bytes();
  auto dst = out.mutable_bytes();
  std::vector<std::string> strings;
  if (t.dtype() == ElementType::String) strings.resize(t.element_count());

  std::uint64_t flat = 0;
  for (std::uint64_t a = 0; a < out_shape[0]; ++a) {
    for (std::uint64_t b = 0; b < out_shape[1]; ++b) {
      for (std::uint64_t c = 0; c < out_shape[2]; ++c) {
        for (std::uint64_t d = 0; d < out_shape[3]; ++d, ++flat) {
          const std::array<std::uint64_t, 4> out_idx{a, b, c, d};
          std::uint64_t src_flat = 0;
          for (std::size_t k = 0; k < 4; ++k) src_flat += out_idx[k] * in_strides[perm[k]];
          if (width == 0) {
            strings[flat] = t.strings()[src_flat];
          } else {
            std::memcpy(dst.data() + flat * width, src.data() + src_flat * width, width);
          }
        }
      }
    }
  }
  if (t.dtype() == ElementType::String) {
    return Tensor::from_strings(std::move(out_shape), std::move(strings));
  }
  return out;
}

}  // namespace mlh
