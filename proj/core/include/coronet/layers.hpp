#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "coronet/rng.hpp"
#include "coronet/tensor.hpp"

namespace coronet::nn {

enum class Padding { valid, same };
enum class Mode { train, infer };

struct Conv2D {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel_h = 0;
  std::size_t kernel_w = 0;
  std::size_t stride = 1;
  Padding padding = Padding::valid;
  bool use_bias = false;
};

// Depthwise kernel first, then 1x1 pointwise mixing.
struct SeparableConv2D {
  std::size_t in_channels = 0;
  std::size_t out_channels = 0;
  std::size_t kernel_h = 0;
  std::size_t kernel_w = 0;
  std::size_t stride = 1;
  Padding padding = Padding::valid;
  bool use_bias = false;
};

struct BatchNorm {
  std::size_t channels = 0;
  float epsilon = 1e-3f;
  float momentum = 0.99f;
};

struct ReLU {};

struct MaxPool2D {
  std::size_t pool_h = 0;
  std::size_t pool_w = 0;
  std::size_t stride = 1;
  Padding padding = Padding::valid;
};

struct GlobalAvgPool2D {};

struct Dense {
  std::size_t in_features = 0;
  std::size_t out_features = 0;
  bool use_bias = true;
};

struct Dropout {
  float rate = 0.0f;
};

struct Flatten {};
struct ResidualAdd {};
struct Softmax {};

using LayerSpec = std::variant<Conv2D, SeparableConv2D, BatchNorm, ReLU, MaxPool2D,
                               GlobalAvgPool2D, Dense, Dropout, Flatten, ResidualAdd, Softmax>;

std::string_view layer_type_name(const LayerSpec& spec);

/// Number of tensors the layer consumes (2 for ResidualAdd, 1 otherwise).
std::size_t input_arity(const LayerSpec& spec);

/// Throws ConfigError for zero extents, zero stride or a dropout rate outside [0,1].
void validate(const LayerSpec& spec);

/// Static shape inference; throws ShapeError on incompatible inputs.
Shape output_shape(const LayerSpec& spec, std::span<const Shape> inputs);

struct Parameter {
  std::string name;
  Tensor value;
  bool trainable = true;
};

/// Named parameter tensors of one layer, in a fixed per-type order.
class LayerParams {
 public:
  LayerParams() = default;
  explicit LayerParams(std::vector<Parameter> entries) : entries_(std::move(entries)) {}

  const Tensor& get(std::string_view name) const;
  Tensor& get(std::string_view name);
  const Parameter* find(std::string_view name) const;

  std::size_t size() const noexcept { return entries_.size(); }
  bool empty() const noexcept { return entries_.empty(); }
  Parameter& operator[](std::size_t i) { return entries_[i]; }
  const Parameter& operator[](std::size_t i) const { return entries_[i]; }
  auto begin() { return entries_.begin(); }
  auto end() { return entries_.end(); }
  auto begin() const { return entries_.begin(); }
  auto end() const { return entries_.end(); }

 private:
  std::vector<Parameter> entries_;
};

/// Allocates the parameter tensors a layer needs. With an Rng, kernels are
/// He-uniform (conv) or Glorot-uniform (dense); biases and beta are zero, gamma
/// and moving variance one. Without an Rng kernels are left at zero.
LayerParams make_params(const LayerSpec& spec, Rng* init);

/// Output extent and leading padding along one spatial axis.
struct AxisWindow {
  std::size_t out = 0;
  std::size_t pad_before = 0;
};

/// valid: out = floor((in - k)/stride) + 1. same: out = ceil(in/stride), the odd
/// padding pixel goes after (bottom/right).
AxisWindow axis_window(std::size_t in, std::size_t kernel, std::size_t stride, Padding padding);

// Forward kernels. Inputs are NHWC (dense layers: [N, features]).

Tensor conv2d_forward(const Tensor& input, const Conv2D& spec, const LayerParams& params);

/// Per-channel spatial convolution with kernel [kh, kw, C].
Tensor depthwise_conv2d_forward(const Tensor& input, const Tensor& kernel, std::size_t stride,
                                Padding padding);

Tensor separable_conv2d_forward(const Tensor& input, const SeparableConv2D& spec,
                                const LayerParams& params);

Tensor relu(const Tensor& input);

/// `argmax`, when given, receives the flat input index chosen for each output cell.
Tensor maxpool2d_forward(const Tensor& input, const MaxPool2D& spec,
                         std::vector<std::size_t>* argmax = nullptr);

Tensor global_avgpool2d_forward(const Tensor& input);

Tensor dense_forward(const Tensor& input, const Dense& spec, const LayerParams& params);

/// What a batch-norm forward pass leaves behind for backward and for the
/// moving-statistics update.
struct BatchNormCache {
  Tensor normalized;             // x-hat, same shape as input
  std::vector<float> inv_std;    // per channel
  std::vector<float> batch_mean; // train mode only
  std::vector<float> batch_var;  // train mode only (biased)
};

/// Pure forward: train mode normalises with batch statistics, infer mode with
/// the moving statistics. Moving statistics are not touched.
Tensor batchnorm_apply(const Tensor& input, const BatchNorm& spec, const LayerParams& params,
                       Mode mode, BatchNormCache* cache = nullptr);

/// moving = momentum * moving + (1 - momentum) * batch.
void update_moving_statistics(LayerParams& params, const BatchNorm& spec,
                              const BatchNormCache& cache);

/// Forward plus the moving-statistics update in train mode.
Tensor batchnorm_forward(const Tensor& input, const BatchNorm& spec, LayerParams& params,
                         Mode mode);

/// Inverted dropout. `mask`, when given, receives the per-element multiplier.
Tensor dropout_forward(const Tensor& input, const Dropout& spec, Mode mode, std::uint64_t seed,
                       Tensor* mask = nullptr);

Tensor residual_add(const Tensor& main, const Tensor& skip);

/// Softmax over the last axis with max subtraction.
Tensor softmax(const Tensor& logits);

/// [N, ...] -> [N, prod(...)].
Tensor flatten(const Tensor& input);

}  // namespace coronet::nn
