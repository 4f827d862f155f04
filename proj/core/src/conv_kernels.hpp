#pragma once

// im2col / col2im over a single NHWC image; shared by forward and backward.

#include <cstddef>

#include "coronet/layers.hpp"

namespace coronet::nn::detail {

struct ConvGeometry {
  std::size_t h = 0, w = 0, c = 0;  // input
  std::size_t kh = 0, kw = 0, stride = 1;
  AxisWindow oh, ow;

  std::size_t rows() const { return oh.out * ow.out; }
  std::size_t patch() const { return kh * kw * c; }
  bool is_pointwise() const {
    return kh == 1 && kw == 1 && stride == 1 && oh.pad_before == 0 && ow.pad_before == 0;
  }
};

ConvGeometry make_geometry(const Shape& input, std::size_t kh, std::size_t kw, std::size_t stride,
                           Padding padding);

/// cols[r, (i*kw + j)*c + ch] = image[oh*s + i - pad, ow*s + j - pad, ch] (0 outside).
void im2col(const ConvGeometry& g, const float* image, float* cols);

/// Scatter-add of cols back into a zero-initialised image.
void col2im(const ConvGeometry& g, const float* cols, float* image);

}  // namespace coronet::nn::detail
