#include "mlharness/image_ops.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace mlh {

namespace {

ImageDims hwc_dims(const Tensor& t, const char* op) {
  if (t.rank() != 3) {
    fail(Errc::RankError, std::string(op) + " expects a rank-3 HWC tensor, got rank " +
                              std::to_string(t.rank()));
  }
  return {t.shape()[0], t.shape()[1], t.shape()[2]};
}

// Scaled size for aspect-preserving resize, at least one pixel.
std::uint64_t scaled_extent(std::uint64_t extent, double scale, std::uint64_t limit) {
  const auto v = static_cast<std::uint64_t>(std::floor(static_cast<double>(extent) * scale + 0.5));
  return std::clamp<std::uint64_t>(v, 1, limit);
}

void resize_into(std::span<const float> src, ImageDims in, std::span<float> dst,
                 std::uint64_t dst_row_width, std::uint64_t off_y, std::uint64_t off_x,
                 std::uint64_t out_h, std::uint64_t out_w) {
  const double sy = static_cast<double>(in.height) / static_cast<double>(out_h);
  const double sx = static_cast<double>(in.width) / static_cast<double>(out_w);
  const auto c = in.channels;
  for (std::uint64_t y = 0; y < out_h; ++y) {
    double fy = (static_cast<double>(y) + 0.5) * sy - 0.5;
    fy = std::clamp(fy, 0.0, static_cast<double>(in.height - 1));
    const auto y0 = static_cast<std::uint64_t>(fy);
    const auto y1 = std::min(y0 + 1, in.height - 1);
    const double wy = fy - static_cast<double>(y0);
    for (std::uint64_t x = 0; x < out_w; ++x) {
      double fx = (static_cast<double>(x) + 0.5) * sx - 0.5;
      fx = std::clamp(fx, 0.0, static_cast<double>(in.width - 1));
      const auto x0 = static_cast<std::uint64_t>(fx);
      const auto x1 = std::min(x0 + 1, in.width - 1);
      const double wx = fx - static_cast<double>(x0);
      for (std::uint64_t k = 0; k < c; ++k) {
        auto at = [&](std::uint64_t yy, std::uint64_t xx) {
          return static_cast<double>(src[(yy * in.width + xx) * c + k]);
        };
        const double top = at(y0, x0) + (at(y0, x1) - at(y0, x0)) * wx;
        const double bottom = at(y1, x0) + (at(y1, x1) - at(y1, x0)) * wx;
        dst[((off_y + y) * dst_row_width + off_x + x) * c + k] =
            static_cast<float>(top + (bottom - top) * wy);
      }
    }
  }
}

}  // namespace

Tensor builtin_decode(const Tensor& raw, ImageDims dims, ColorLayout source,
                      ColorLayout target, ElementType element_type) {
  if (raw.dtype() != ElementType::UInt8 && raw.dtype() != ElementType::Int8) {
    fail(Errc::SizeMismatch, "decode expects 8-bit pixel data, got " +
                                 std::string(element_type_name(raw.dtype())));
  }
  if (element_type != ElementType::UInt8 && element_type != ElementType::Int8) {
    fail(Errc::RangeError, "decode element_type must be uint8 or int8");
  }
  const auto expected = dims.height * dims.width * dims.channels;
  if (raw.bytes().size() != expected) {
    fail(Errc::SizeMismatch, "raw image has " + std::to_string(raw.bytes().size()) +
                                 " bytes, declared dims need " + std::to_string(expected));
  }
  Tensor out(ElementType::Float32, {dims.height, dims.width, dims.channels});
  auto dst = out.mutable_values<float>();
  const auto src = raw.bytes();
  const bool swap = source != target;
  const bool is_signed = element_type == ElementType::Int8;
  for (std::uint64_t p = 0; p < dims.height * dims.width; ++p) {
    for (std::uint64_t k = 0; k < dims.channels; ++k) {
      const auto from = swap ? dims.channels - 1 - k : k;
      const auto byte = src[p * dims.channels + from];
      dst[p * dims.channels + k] =
          is_signed ? static_cast<float>(static_cast<std::int8_t>(byte)) : static_cast<float>(byte);
    }
  }
  return out;
}

Tensor builtin_center_crop(const Tensor& hwc, double percentage) {
  const auto d = hwc_dims(hwc, "center crop");
  if (!(percentage > 0.0 && percentage <= 100.0)) {
    fail(Errc::RangeError, "crop percentage must be in (0, 100]");
  }
  if (hwc.dtype() == ElementType::String) fail(Errc::ShapeMismatch, "cannot crop strings");
  const auto out_h = static_cast<std::uint64_t>(std::floor(static_cast<double>(d.height) * percentage / 100.0));
  const auto out_w = static_cast<std::uint64_t>(std::floor(static_cast<double>(d.width) * percentage / 100.0));
  if (out_h == 0 || out_w == 0) {
    fail(Errc::DegenerateCrop, "crop of " + std::to_string(d.height) + "x" +
                                   std::to_string(d.width) + " at " +
                                   std::to_string(percentage) + "% is empty");
  }
  const auto top = (d.height - out_h) / 2;
  const auto left = (d.width - out_w) / 2;
  const auto pixel = d.channels * element_width(hwc.dtype());

  Tensor out(hwc.dtype(), {out_h, out_w, d.channels});
  const auto src = hwc.bytes();
  auto dst = out.mutable_bytes();
  for (std::uint64_t y = 0; y < out_h; ++y) {
    std::copy_n(src.begin() + static_cast<std::ptrdiff_t>(((top + y) * d.width + left) * pixel),
                out_w * pixel, dst.begin() + static_cast<std::ptrdiff_t>(y * out_w * pixel));
  }
  return out;
}

Tensor builtin_resize_bilinear(const Tensor& hwc, std::uint64_t out_height,
                               std::uint64_t out_width, bool keep_aspect_ratio) {
  const auto d = hwc_dims(hwc, "resize");
  if (hwc.dtype() != ElementType::Float32) {
    fail(Errc::ShapeMismatch, "resize expects float32 input");
  }
  if (out_height == 0 || out_width == 0 || d.height == 0 || d.width == 0) {
    fail(Errc::RangeError, "resize dimensions must be positive");
  }
  if (out_height == d.height && out_width == d.width) return hwc;

  Tensor out(ElementType::Float32, {out_height, out_width, d.channels});
  if (!keep_aspect_ratio) {
    resize_into(hwc.values<float>(), d, out.mutable_values<float>(), out_width, 0, 0,
                out_height, out_width);
    return out;
  }
  const double scale = std::min(static_cast<double>(out_height) / static_cast<double>(d.height),
                                static_cast<double>(out_width) / static_cast<double>(d.width));
  const auto h = scaled_extent(d.height, scale, out_height);
  const auto w = scaled_extent(d.width, scale, out_width);
  resize_into(hwc.values<float>(), d, out.mutable_values<float>(), out_width,
              (out_height - h) / 2, (out_width - w) / 2, h, w);
  return out;
}

Tensor builtin_normalize(const Tensor& t, std::span<const double> mean, double rescale) {
  if (t.dtype() != ElementType::Float32 || t.rank() == 0) {
    fail(Errc::ShapeMismatch, "normalize expects a float32 tensor with a channel axis");
  }
  const auto channels = t.shape().back();
  if (mean.size() != channels) {
    fail(Errc::ShapeMismatch, "mean has " + std::to_string(mean.size()) +
                                  " entries for " + std::to_string(channels) + " channels");
  }
  if (rescale == 0.0) fail(Errc::ZeroRescale, "rescale must be non-zero");
  Tensor out = t;
  auto v = out.mutable_values<float>();
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] = static_cast<float>((static_cast<double>(v[i]) - mean[i % channels]) / rescale);
  }
  return out;
}

}  // namespace mlh
