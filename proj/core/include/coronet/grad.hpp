#pragma once

#include <cstddef>
#include <vector>

#include "coronet/layers.hpp"
#include "coronet/tensor.hpp"

namespace coronet::grad {

/// Gradients of one layer: w.r.t. its input(s) and each parameter tensor, the
/// latter in LayerParams order. Non-trainable parameters get zero tensors.
struct LayerGrads {
  std::vector<Tensor> inputs;
  std::vector<Tensor> params;
};

LayerGrads conv2d_backward(const Tensor& input, const nn::Conv2D& spec,
                           const nn::LayerParams& params, const Tensor& grad_out,
                           bool need_input_grad = true);

Tensor depthwise_conv2d_backward_input(const Shape& input_shape, const Tensor& kernel,
                                       std::size_t stride, nn::Padding padding,
                                       const Tensor& grad_out);

Tensor depthwise_conv2d_backward_kernel(const Tensor& input, const Shape& kernel_shape,
                                        std::size_t stride, nn::Padding padding,
                                        const Tensor& grad_out);

LayerGrads separable_conv2d_backward(const Tensor& input, const nn::SeparableConv2D& spec,
                                     const nn::LayerParams& params, const Tensor& grad_out,
                                     bool need_input_grad = true);

Tensor relu_backward(const Tensor& input, const Tensor& grad_out);

Tensor maxpool2d_backward(const Shape& input_shape, const std::vector<std::size_t>& argmax,
                          const Tensor& grad_out);

Tensor global_avgpool2d_backward(const Shape& input_shape, const Tensor& grad_out);

LayerGrads dense_backward(const Tensor& input, const nn::Dense& spec,
                          const nn::LayerParams& params, const Tensor& grad_out,
                          bool need_input_grad = true);

/// Train mode differentiates through the batch statistics; infer mode treats the
/// moving statistics as constants.
LayerGrads batchnorm_backward(const nn::BatchNormCache& cache, const nn::BatchNorm& spec,
                              const nn::LayerParams& params, nn::Mode mode,
                              const Tensor& grad_out);

Tensor dropout_backward(const Tensor& mask, const Tensor& grad_out);

/// Vector-Jacobian product of softmax along the last axis.
Tensor softmax_backward(const Tensor& probabilities, const Tensor& grad_out);

/// d(mean cross-entropy)/d(logits) for a softmax head: (q - onehot) / N.
Tensor softmax_cross_entropy_backward(const Tensor& probabilities,
                                      const std::vector<std::size_t>& labels);

}  // namespace coronet::grad
