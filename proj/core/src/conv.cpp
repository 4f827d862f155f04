#include <algorithm>
#include <limits>
#include <vector>

#include "conv_kernels.hpp"
#include "coronet/error.hpp"
#include "coronet/layers.hpp"

namespace coronet::nn {

namespace detail {

ConvGeometry make_geometry(const Shape& input, std::size_t kh, std::size_t kw, std::size_t stride,
                           Padding padding) {
  if (input.rank() != 4) throw ShapeError("expected NHWC input, got " + input.str());
  ConvGeometry g;
  g.h = input[1];
  g.w = input[2];
  g.c = input[3];
  g.kh = kh;
  g.kw = kw;
  g.stride = stride;
  g.oh = axis_window(g.h, kh, stride, padding);
  g.ow = axis_window(g.w, kw, stride, padding);
  return g;
}

void im2col(const ConvGeometry& g, const float* image, float* cols) {
  const std::size_t patch = g.patch();
  for (std::size_t oy = 0; oy < g.oh.out; ++oy) {
    for (std::size_t ox = 0; ox < g.ow.out; ++ox) {
      float* row = cols + (oy * g.ow.out + ox) * patch;
      for (std::size_t i = 0; i < g.kh; ++i) {
        const long iy = long(oy * g.stride + i) - long(g.oh.pad_before);
        for (std::size_t j = 0; j < g.kw; ++j) {
          const long ix = long(ox * g.stride + j) - long(g.ow.pad_before);
          float* dst = row + (i * g.kw + j) * g.c;
          if (iy < 0 || ix < 0 || iy >= long(g.h) || ix >= long(g.w)) {
            std::fill(dst, dst + g.c, 0.0f);
          } else {
            const float* src = image + (std::size_t(iy) * g.w + std::size_t(ix)) * g.c;
            std::copy(src, src + g.c, dst);
          }
        }
      }
    }
  }
}

void col2im(const ConvGeometry& g, const float* cols, float* image) {
  const std::size_t patch = g.patch();
  for (std::size_t oy = 0; oy < g.oh.out; ++oy) {
    for (std::size_t ox = 0; ox < g.ow.out; ++ox) {
      const float* row = cols + (oy * g.ow.out + ox) * patch;
      for (std::size_t i = 0; i < g.kh; ++i) {
        const long iy = long(oy * g.stride + i) - long(g.oh.pad_before);
        if (iy < 0 || iy >= long(g.h)) continue;
        for (std::size_t j = 0; j < g.kw; ++j) {
          const long ix = long(ox * g.stride + j) - long(g.ow.pad_before);
          if (ix < 0 || ix >= long(g.w)) continue;
          const float* src = row + (i * g.kw + j) * g.c;
          float* dst = image + (std::size_t(iy) * g.w + std::size_t(ix)) * g.c;
          for (std::size_t ch = 0; ch < g.c; ++ch) dst[ch] += src[ch];
        }
      }
    }
  }
}

}  // namespace detail

namespace {

void add_bias(Tensor& out, const Tensor& bias) {
  const std::size_t c = bias.numel();
  const std::size_t rows = out.numel() / c;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t k = 0; k < c; ++k) out[r * c + k] += bias[k];
}

void check_param_shape(const Tensor& t, const Shape& expected, const char* what) {
  if (t.shape() != expected) {
    throw ShapeError(std::string(what) + " has shape " + t.shape().str() + ", layer expects " +
                     expected.str());
  }
}

// out[N*rows, cout] = im2col(input) * kernel[patch, cout], one image at a time.
Tensor conv_gemm(const Tensor& input, const detail::ConvGeometry& g, const Tensor& kernel,
                 std::size_t cout) {
  const std::size_t n = input.dim(0);
  Tensor out(Shape{n, g.oh.out, g.ow.out, cout});
  const std::size_t in_image = g.h * g.w * g.c;
  const std::size_t out_image = g.rows() * cout;
  if (g.is_pointwise()) {
    gemm(false, false, n * g.rows(), cout, g.c, input.data(), kernel.data(), out.data(), false);
    return out;
  }
  std::vector<float> cols(g.rows() * g.patch());
  for (std::size_t b = 0; b < n; ++b) {
    detail::im2col(g, input.data() + b * in_image, cols.data());
    gemm(false, false, g.rows(), cout, g.patch(), cols.data(), kernel.data(),
         out.data() + b * out_image, false);
  }
  return out;
}

}  // namespace

Tensor conv2d_forward(const Tensor& input, const Conv2D& spec, const LayerParams& params) {
  output_shape(spec, std::span<const Shape>(&input.shape(), 1));
  const Tensor& kernel = params.get("kernel");
  check_param_shape(kernel, Shape{spec.kernel_h, spec.kernel_w, spec.in_channels, spec.out_channels},
                    "conv kernel");
  const auto g = detail::make_geometry(input.shape(), spec.kernel_h, spec.kernel_w, spec.stride,
                                       spec.padding);
  Tensor out = conv_gemm(input, g, kernel, spec.out_channels);
  if (spec.use_bias) add_bias(out, params.get("bias"));
  return out;
}

Tensor depthwise_conv2d_forward(const Tensor& input, const Tensor& kernel, std::size_t stride,
                                Padding padding) {
  if (kernel.rank() != 3) throw ShapeError("depthwise kernel must be [kh,kw,C]");
  const auto g = detail::make_geometry(input.shape(), kernel.dim(0), kernel.dim(1), stride, padding);
  if (kernel.dim(2) != g.c) {
    throw ShapeError("depthwise kernel channels " + std::to_string(kernel.dim(2)) +
                     " vs input " + input.shape().str());
  }
  const std::size_t n = input.dim(0);
  const std::size_t c = g.c;
  Tensor out(Shape{n, g.oh.out, g.ow.out, c});
  for (std::size_t b = 0; b < n; ++b) {
    const float* image = input.data() + b * g.h * g.w * c;
    for (std::size_t oy = 0; oy < g.oh.out; ++oy) {
      for (std::size_t ox = 0; ox < g.ow.out; ++ox) {
        float* dst = out.data() + ((b * g.oh.out + oy) * g.ow.out + ox) * c;
        for (std::size_t i = 0; i < g.kh; ++i) {
          const long iy = long(oy * stride + i) - long(g.oh.pad_before);
          if (iy < 0 || iy >= long(g.h)) continue;
          for (std::size_t j = 0; j < g.kw; ++j) {
            const long ix = long(ox * stride + j) - long(g.ow.pad_before);
            if (ix < 0 || ix >= long(g.w)) continue;
            const float* src = image + (std::size_t(iy) * g.w + std::size_t(ix)) * c;
            const float* k = kernel.data() + (i * g.kw + j) * c;
            for (std::size_t ch = 0; ch < c; ++ch) dst[ch] += src[ch] * k[ch];
          }
        }
      }
    }
  }
  return out;
}

Tensor separable_conv2d_forward(const Tensor& input, const SeparableConv2D& spec,
                                const LayerParams& params) {
  output_shape(spec, std::span<const Shape>(&input.shape(), 1));
  const Tensor& dw = params.get("depthwise_kernel");
  const Tensor& pw = params.get("pointwise_kernel");
  check_param_shape(dw, Shape{spec.kernel_h, spec.kernel_w, spec.in_channels}, "depthwise kernel");
  check_param_shape(pw, Shape{1, 1, spec.in_channels, spec.out_channels}, "pointwise kernel");
  const Tensor mid = depthwise_conv2d_forward(input, dw, spec.stride, spec.padding);
  Tensor out(Shape{mid.dim(0), mid.dim(1), mid.dim(2), spec.out_channels});
  gemm(false, false, mid.numel() / spec.in_channels, spec.out_channels, spec.in_channels,
       mid.data(), pw.data(), out.data(), false);
  if (spec.use_bias) add_bias(out, params.get("bias"));
  return out;
}

Tensor maxpool2d_forward(const Tensor& input, const MaxPool2D& spec,
                         std::vector<std::size_t>* argmax) {
  const Shape out_shape = output_shape(spec, std::span<const Shape>(&input.shape(), 1));
  const auto g = detail::make_geometry(input.shape(), spec.pool_h, spec.pool_w, spec.stride,
                                       spec.padding);
  const std::size_t n = input.dim(0);
  const std::size_t c = g.c;
  Tensor out(out_shape);
  if (argmax) argmax->assign(out.numel(), 0);
  std::vector<std::size_t> best_at(c);
  for (std::size_t b = 0; b < n; ++b) {
    for (std::size_t oy = 0; oy < g.oh.out; ++oy) {
      for (std::size_t ox = 0; ox < g.ow.out; ++ox) {
        const std::size_t o = ((b * g.oh.out + oy) * g.ow.out + ox) * c;
        float* dst = out.data() + o;
        std::fill(dst, dst + c, -std::numeric_limits<float>::infinity());
        bool any = false;
        for (std::size_t i = 0; i < g.kh; ++i) {
          const long iy = long(oy * spec.stride + i) - long(g.oh.pad_before);
          if (iy < 0 || iy >= long(g.h)) continue;
          for (std::size_t j = 0; j < g.kw; ++j) {
            const long ix = long(ox * spec.stride + j) - long(g.ow.pad_before);
            if (ix < 0 || ix >= long(g.w)) continue;
            const std::size_t base = ((b * g.h + std::size_t(iy)) * g.w + std::size_t(ix)) * c;
            const float* src = input.data() + base;
            for (std::size_t ch = 0; ch < c; ++ch) {
              if (!any || src[ch] > dst[ch]) {
                dst[ch] = src[ch];
                best_at[ch] = base + ch;
              }
            }
            any = true;
          }
        }
        if (argmax) std::copy(best_at.begin(), best_at.end(), argmax->begin() + long(o));
      }
    }
  }
  return out;
}

Tensor global_avgpool2d_forward(const Tensor& input) {
  const Shape out_shape =
      output_shape(GlobalAvgPool2D{}, std::span<const Shape>(&input.shape(), 1));
  const std::size_t n = input.dim(0), hw = input.dim(1) * input.dim(2), c = input.dim(3);
  Tensor out(out_shape);
  if (hw == 0) return out;
  for (std::size_t b = 0; b < n; ++b) {
    std::vector<double> acc(c, 0.0);
    for (std::size_t p = 0; p < hw; ++p) {
      const float* src = input.data() + (b * hw + p) * c;
      for (std::size_t ch = 0; ch < c; ++ch) acc[ch] += src[ch];
    }
    for (std::size_t ch = 0; ch < c; ++ch) out[b * c + ch] = float(acc[ch] / double(hw));
  }
  return out;
}

}  // namespace coronet::nn
