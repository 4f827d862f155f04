#include "coronet/grad.hpp"

#include <algorithm>

#include "conv_kernels.hpp"
#include "coronet/error.hpp"

namespace coronet::grad {

namespace {

void require_same(const Shape& a, const Shape& b, const char* what) {
  if (a != b) throw ShapeError(std::string(what) + ": " + a.str() + " vs " + b.str());
}

Tensor bias_grad(const Tensor& grad_out, std::size_t channels) {
  Tensor db(Shape{channels});
  std::vector<double> acc(channels, 0.0);
  const std::size_t rows = grad_out.numel() / channels;
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t k = 0; k < channels; ++k) acc[k] += grad_out[r * channels + k];
  for (std::size_t k = 0; k < channels; ++k) db[k] = float(acc[k]);
  return db;
}

}  // namespace

LayerGrads conv2d_backward(const Tensor& input, const nn::Conv2D& spec,
                           const nn::LayerParams& params, const Tensor& grad_out,
                           bool need_input_grad) {
  const Shape out_shape = nn::output_shape(spec, std::span<const Shape>(&input.shape(), 1));
  require_same(grad_out.shape(), out_shape, "conv2d gradient shape");
  const Tensor& kernel = params.get("kernel");
  const auto g = nn::detail::make_geometry(input.shape(), spec.kernel_h, spec.kernel_w,
                                           spec.stride, spec.padding);
  const std::size_t n = input.dim(0);
  const std::size_t cout = spec.out_channels;
  const std::size_t in_image = g.h * g.w * g.c;
  const std::size_t out_image = g.rows() * cout;

  Tensor dkernel(kernel.shape());
  Tensor dinput;
  if (need_input_grad) dinput = Tensor(input.shape());

  if (g.is_pointwise()) {
    const std::size_t rows = n * g.rows();
    gemm(true, false, g.c, cout, rows, input.data(), grad_out.data(), dkernel.data(), false);
    if (need_input_grad) {
      gemm(false, true, rows, g.c, cout, grad_out.data(), kernel.data(), dinput.data(), false);
    }
  } else {
    std::vector<float> cols(g.rows() * g.patch());
    std::vector<float> dcols(need_input_grad ? cols.size() : 0);
    for (std::size_t b = 0; b < n; ++b) {
      nn::detail::im2col(g, input.data() + b * in_image, cols.data());
      gemm(true, false, g.patch(), cout, g.rows(), cols.data(), grad_out.data() + b * out_image,
           dkernel.data(), b > 0);
      if (need_input_grad) {
        gemm(false, true, g.rows(), g.patch(), cout, grad_out.data() + b * out_image,
             kernel.data(), dcols.data(), false);
        nn::detail::col2im(g, dcols.data(), dinput.data() + b * in_image);
      }
    }
  }

  LayerGrads out;
  out.inputs.push_back(std::move(dinput));
  out.params.push_back(std::move(dkernel));
  if (spec.use_bias) out.params.push_back(bias_grad(grad_out, cout));
  return out;
}

Tensor depthwise_conv2d_backward_input(const Shape& input_shape, const Tensor& kernel,
                                       std::size_t stride, nn::Padding padding,
                                       const Tensor& grad_out) {
  const auto g = nn::detail::make_geometry(input_shape, kernel.dim(0), kernel.dim(1), stride,
                                           padding);
  const std::size_t n = input_shape[0], c = g.c;
  Tensor dinput(input_shape);
  for (std::size_t b = 0; b < n; ++b) {
    float* image = dinput.data() + b * g.h * g.w * c;
    for (std::size_t oy = 0; oy < g.oh.out; ++oy) {
      for (std::size_t ox = 0; ox < g.ow.out; ++ox) {
        const float* dy = grad_out.data() + ((b * g.oh.out + oy) * g.ow.out + ox) * c;
        for (std::size_t i = 0; i < g.kh; ++i) {
          const long iy = long(oy * stride + i) - long(g.oh.pad_before);
          if (iy < 0 || iy >= long(g.h)) continue;
          for (std::size_t j = 0; j < g.kw; ++j) {
            const long ix = long(ox * stride + j) - long(g.ow.pad_before);
            if (ix < 0 || ix >= long(g.w)) continue;
            float* dst = image + (std::size_t(iy) * g.w + std::size_t(ix)) * c;
            const float* k = kernel.data() + (i * g.kw + j) * c;
            for (std::size_t ch = 0; ch < c; ++ch) dst[ch] += dy[ch] * k[ch];
          }
        }
      }
    }
  }
  return dinput;
}

Tensor depthwise_conv2d_backward_kernel(const Tensor& input, const Shape& kernel_shape,
                                        std::size_t stride, nn::Padding padding,
                                        const Tensor& grad_out) {
  const auto g = nn::detail::make_geometry(input.shape(), kernel_shape[0], kernel_shape[1], stride,
                                           padding);
  const std::size_t n = input.dim(0), c = g.c;
  Tensor dkernel(kernel_shape);
  for (std::size_t b = 0; b < n; ++b) {
    const float* image = input.data() + b * g.h * g.w * c;
    for (std::size_t oy = 0; oy < g.oh.out; ++oy) {
      for (std::size_t ox = 0; ox < g.ow.out; ++ox) {
        const float* dy = grad_out.data() + ((b * g.oh.out + oy) * g.ow.out + ox) * c;
        for (std::size_t i = 0; i < g.kh; ++i) {
          const long iy = long(oy * stride + i) - long(g.oh.pad_before);
          if (iy < 0 || iy >= long(g.h)) continue;
          for (std::size_t j = 0; j < g.kw; ++j) {
            const long ix = long(ox * stride + j) - long(g.ow.pad_before);
            if (ix < 0 || ix >= long(g.w)) continue;
            const float* src = image + (std::size_t(iy) * g.w + std::size_t(ix)) * c;
            float* dk = dkernel.data() + (i * g.kw + j) * c;
            for (std::size_t ch = 0; ch < c; ++ch) dk[ch] += dy[ch] * src[ch];
          }
        }
      }
    }
  }
  return dkernel;
}

LayerGrads separable_conv2d_backward(const Tensor& input, const nn::SeparableConv2D& spec,
                                     const nn::LayerParams& params, const Tensor& grad_out,
                                     bool need_input_grad) {
  const Shape out_shape = nn::output_shape(spec, std::span<const Shape>(&input.shape(), 1));
  require_same(grad_out.shape(), out_shape, "separable conv gradient shape");
  const Tensor& dw = params.get("depthwise_kernel");
  const Tensor& pw = params.get("pointwise_kernel");

  // The depthwise output is recomputed instead of cached.
  const Tensor mid = nn::depthwise_conv2d_forward(input, dw, spec.stride, spec.padding);
  const std::size_t rows = mid.numel() / spec.in_channels;

  Tensor dpw(pw.shape());
  gemm(true, false, spec.in_channels, spec.out_channels, rows, mid.data(), grad_out.data(),
       dpw.data(), false);
  Tensor dmid(mid.shape());
  gemm(false, true, rows, spec.in_channels, spec.out_channels, grad_out.data(), pw.data(),
       dmid.data(), false);

  LayerGrads out;
  out.inputs.push_back(need_input_grad ? depthwise_conv2d_backward_input(
                                             input.shape(), dw, spec.stride, spec.padding, dmid)
                                       : Tensor());
  out.params.push_back(
      depthwise_conv2d_backward_kernel(input, dw.shape(), spec.stride, spec.padding, dmid));
  out.params.push_back(std::move(dpw));
  if (spec.use_bias) out.params.push_back(bias_grad(grad_out, spec.out_channels));
  return out;
}

Tensor relu_backward(const Tensor& input, const Tensor& grad_out) {
  require_same(input.shape(), grad_out.shape(), "relu gradient shape");
  Tensor dx(input.shape());
  for (std::size_t i = 0; i < dx.numel(); ++i) dx[i] = input[i] > 0.0f ? grad_out[i] : 0.0f;
  return dx;
}

Tensor maxpool2d_backward(const Shape& input_shape, const std::vector<std::size_t>& argmax,
                          const Tensor& grad_out) {
  if (argmax.size() != grad_out.numel()) {
    throw StateError("max-pool backward needs the argmax of the matching forward pass");
  }
  Tensor dx(input_shape);
  for (std::size_t o = 0; o < argmax.size(); ++o) dx[argmax[o]] += grad_out[o];
  return dx;
}

Tensor global_avgpool2d_backward(const Shape& input_shape, const Tensor& grad_out) {
  const std::size_t n = input_shape[0], hw = input_shape[1] * input_shape[2], c = input_shape[3];
  require_same(grad_out.shape(), Shape{n, c}, "global average pool gradient shape");
  Tensor dx(input_shape);
  if (hw == 0) return dx;
  const float scale = 1.0f / float(hw);
  for (std::size_t b = 0; b < n; ++b)
    for (std::size_t p = 0; p < hw; ++p)
      for (std::size_t ch = 0; ch < c; ++ch)
        dx[(b * hw + p) * c + ch] = grad_out[b * c + ch] * scale;
  return dx;
}

LayerGrads dense_backward(const Tensor& input, const nn::Dense& spec,
                          const nn::LayerParams& params, const Tensor& grad_out,
                          bool need_input_grad) {
  const Shape out_shape = nn::output_shape(spec, std::span<const Shape>(&input.shape(), 1));
  require_same(grad_out.shape(), out_shape, "dense gradient shape");
  const Tensor& w = params.get("kernel");
  const std::size_t n = input.dim(0);
  LayerGrads out;
  Tensor dx;
  if (need_input_grad) {
    dx = Tensor(input.shape());
    gemm(false, true, n, spec.in_features, spec.out_features, grad_out.data(), w.data(),
         dx.data(), false);
  }
  Tensor dw(w.shape());
  gemm(true, false, spec.in_features, spec.out_features, n, input.data(), grad_out.data(),
       dw.data(), false);
  out.inputs.push_back(std::move(dx));
  out.params.push_back(std::move(dw));
  if (spec.use_bias) out.params.push_back(bias_grad(grad_out, spec.out_features));
  return out;
}

LayerGrads batchnorm_backward(const nn::BatchNormCache& cache, const nn::BatchNorm& spec,
                              const nn::LayerParams& params, nn::Mode mode,
                              const Tensor& grad_out) {
  const Tensor& xhat = cache.normalized;
  require_same(xhat.shape(), grad_out.shape(), "batch-norm gradient shape");
  const std::size_t c = spec.channels;
  const std::size_t rows = grad_out.numel() / c;
  const Tensor& gamma = params.get("gamma");

  std::vector<double> sum_dy(c, 0.0), sum_dy_xhat(c, 0.0);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t k = 0; k < c; ++k) {
      const double dy = grad_out[r * c + k];
      sum_dy[k] += dy;
      sum_dy_xhat[k] += dy * xhat[r * c + k];
    }
  }

  Tensor dx(grad_out.shape());
  if (mode == nn::Mode::train) {
    const double m = double(rows);
    for (std::size_t r = 0; r < rows; ++r) {
      for (std::size_t k = 0; k < c; ++k) {
        const double scale = double(gamma[k]) * cache.inv_std[k] / m;
        dx[r * c + k] = float(scale * (m * grad_out[r * c + k] - sum_dy[k] -
                                       xhat[r * c + k] * sum_dy_xhat[k]));
      }
    }
  } else {
    for (std::size_t r = 0; r < rows; ++r)
      for (std::size_t k = 0; k < c; ++k)
        dx[r * c + k] = grad_out[r * c + k] * gamma[k] * cache.inv_std[k];
  }

  LayerGrads out;
  out.inputs.push_back(std::move(dx));
  Tensor dgamma(Shape{c}), dbeta(Shape{c});
  for (std::size_t k = 0; k < c; ++k) {
    dgamma[k] = float(sum_dy_xhat[k]);
    dbeta[k] = float(sum_dy[k]);
  }
  out.params.push_back(std::move(dgamma));
  out.params.push_back(std::move(dbeta));
  out.params.emplace_back(Shape{c});
  out.params.emplace_back(Shape{c});
  return out;
}

Tensor dropout_backward(const Tensor& mask, const Tensor& grad_out) {
  return elementwise_zip(mask, grad_out, ZipOp::mul);
}

Tensor softmax_backward(const Tensor& probabilities, const Tensor& grad_out) {
  require_same(probabilities.shape(), grad_out.shape(), "softmax gradient shape");
  const std::size_t n = probabilities.dim(probabilities.rank() - 1);
  const std::size_t rows = probabilities.numel() / n;
  Tensor dx(probabilities.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const float* p = probabilities.data() + r * n;
    const float* dy = grad_out.data() + r * n;
    double dot = 0.0;
    for (std::size_t k = 0; k < n; ++k) dot += double(dy[k]) * p[k];
    for (std::size_t k = 0; k < n; ++k) dx[r * n + k] = float(p[k] * (dy[k] - dot));
  }
  return dx;
}

Tensor softmax_cross_entropy_backward(const Tensor& probabilities,
                                      const std::vector<std::size_t>& labels) {
  if (probabilities.rank() != 2 || probabilities.dim(0) != labels.size()) {
    throw ShapeError("probabilities " + probabilities.shape().str() + " vs " +
                     std::to_string(labels.size()) + " labels");
  }
  const std::size_t n = labels.size(), classes = probabilities.dim(1);
  Tensor dx = probabilities;
  const float inv_n = 1.0f / float(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] >= classes) throw InputError("label out of range");
    dx[i * classes + labels[i]] -= 1.0f;
  }
  for (float& v : dx.values()) v *= inv_n;
  return dx;
}

}  // namespace coronet::grad
