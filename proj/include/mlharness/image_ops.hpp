#pragma once

#include <cstdint>
#include <span>

#include "mlharness/manifest.hpp"
#include "mlharness/tensor.hpp"

namespace mlh {

struct ImageDims {
  std::uint64_t height = 0;
  std::uint64_t width = 0;
  std::uint64_t channels = 0;
};

// Casts raw 8-bit HWC pixels to float32 HWC. The bytes are read as
// `element_type` (uint8 or int8). Channels are reversed when the source and
// target color orders differ.
Tensor builtin_decode(const Tensor& raw, ImageDims dims, ColorLayout source,
                      ColorLayout target, ElementType element_type = ElementType::UInt8);

// Output is floor(h*p/100) x floor(w*p/100), anchored at
// (floor((h-h')/2), floor((w-w')/2)).
Tensor builtin_center_crop(const Tensor& hwc, double percentage);

// Bilinear with half-pixel centers: src = (dst + 0.5) * in/out - 0.5, clamped
// to the border. With keep_aspect_ratio both axes scale by
// min(out_h/h, out_w/w) and the result is zero-padded symmetrically.
Tensor builtin_resize_bilinear(const Tensor& hwc, std::uint64_t out_height,
                               std::uint64_t out_width, bool keep_aspect_ratio = false);

// out[..., c] = (in[..., c] - mean[c]) / rescale on a float32 tensor whose
// last axis is the channel axis.
Tensor builtin_normalize(const Tensor& t, std::span<const double> mean, double rescale);

}  // namespace mlh
