#include "coronet/layers.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "coronet/error.hpp"

namespace coronet::nn {

namespace {

template <class... Ts>
struct Overloaded : Ts... {
  using Ts::operator()...;
};
template <class... Ts>
Overloaded(Ts...) -> Overloaded<Ts...>;

void require_rank(const Shape& s, std::size_t rank, std::string_view layer) {
  if (s.rank() != rank) {
    throw ShapeError(std::string(layer) + " expects rank-" + std::to_string(rank) + " input, got " +
                     s.str());
  }
}

void require_channels(const Shape& s, std::size_t channels, std::string_view layer) {
  if (s.rank() == 0 || s[s.rank() - 1] != channels) {
    throw ShapeError(std::string(layer) + " expects " + std::to_string(channels) +
                     " channels, got input " + s.str());
  }
}

template <typename ConvLike>
Shape conv_output_shape(const ConvLike& spec, const Shape& in, std::string_view layer) {
  require_rank(in, 4, layer);
  require_channels(in, spec.in_channels, layer);
  const auto h = axis_window(in[1], spec.kernel_h, spec.stride, spec.padding);
  const auto w = axis_window(in[2], spec.kernel_w, spec.stride, spec.padding);
  return Shape{in[0], h.out, w.out, spec.out_channels};
}

void fill_uniform(Tensor& t, Rng& rng, float limit) {
  for (float& v : t.values()) v = rng.uniform(-limit, limit);
}

}  // namespace

std::string_view layer_type_name(const LayerSpec& spec) {
  return std::visit(Overloaded{
                        [](const Conv2D&) { return std::string_view("Conv2D"); },
                        [](const SeparableConv2D&) { return std::string_view("SeparableConv2D"); },
                        [](const BatchNorm&) { return std::string_view("BatchNormalization"); },
                        [](const ReLU&) { return std::string_view("ReLU"); },
                        [](const MaxPool2D&) { return std::string_view("MaxPooling2D"); },
                        [](const GlobalAvgPool2D&) {
                          return std::string_view("GlobalAveragePooling2D");
                        },
                        [](const Dense&) { return std::string_view("Dense"); },
                        [](const Dropout&) { return std::string_view("Dropout"); },
                        [](const Flatten&) { return std::string_view("Flatten"); },
                        [](const ResidualAdd&) { return std::string_view("Add"); },
                        [](const Softmax&) { return std::string_view("Softmax"); },
                    },
                    spec);
}

std::size_t input_arity(const LayerSpec& spec) {
  return std::holds_alternative<ResidualAdd>(spec) ? 2 : 1;
}

void validate(const LayerSpec& spec) {
  auto positive = [](std::size_t v, const char* what) {
    if (v == 0) throw ConfigError(std::string(what) + " must be positive");
  };
  std::visit(Overloaded{
                 [&](const Conv2D& s) {
                   positive(s.in_channels, "in_channels");
                   positive(s.out_channels, "out_channels");
                   positive(s.kernel_h, "kernel_h");
                   positive(s.kernel_w, "kernel_w");
                   positive(s.stride, "stride");
                 },
                 [&](const SeparableConv2D& s) {
                   positive(s.in_channels, "in_channels");
                   positive(s.out_channels, "out_channels");
                   positive(s.kernel_h, "kernel_h");
                   positive(s.kernel_w, "kernel_w");
                   positive(s.stride, "stride");
                 },
                 [&](const BatchNorm& s) {
                   positive(s.channels, "channels");
                   if (!(s.epsilon > 0.0f)) throw ConfigError("batch-norm epsilon must be > 0");
                   if (!(s.momentum >= 0.0f && s.momentum <= 1.0f)) {
                     throw ConfigError("batch-norm momentum must lie in [0,1]");
                   }
                 },
                 [&](const MaxPool2D& s) {
                   positive(s.pool_h, "pool_h");
                   positive(s.pool_w, "pool_w");
                   positive(s.stride, "stride");
                 },
                 [&](const Dense& s) {
                   positive(s.in_features, "in_features");
                   positive(s.out_features, "out_features");
                 },
                 [&](const Dropout& s) {
                   if (!(s.rate >= 0.0f && s.rate <= 1.0f)) {
                     throw ConfigError("dropout rate must lie in [0,1]");
                   }
                 },
                 [](const auto&) {},
             },
             spec);
}

AxisWindow axis_window(std::size_t in, std::size_t kernel, std::size_t stride, Padding padding) {
  if (stride == 0 || kernel == 0) throw ShapeError("kernel and stride must be positive");
  if (in == 0) throw ShapeError("spatial extent is zero");
  if (padding == Padding::valid) {
    if (kernel > in) {
      throw ShapeError("window " + std::to_string(kernel) + " larger than input extent " +
                       std::to_string(in));
    }
    return {(in - kernel) / stride + 1, 0};
  }
  const std::size_t out = (in + stride - 1) / stride;
  const std::size_t needed = (out - 1) * stride + kernel;
  const std::size_t total = needed > in ? needed - in : 0;
  return {out, total / 2};
}

Shape output_shape(const LayerSpec& spec, std::span<const Shape> inputs) {
  if (inputs.size() != input_arity(spec)) {
    throw ShapeError(std::string(layer_type_name(spec)) + " takes " +
                     std::to_string(input_arity(spec)) + " input(s)");
  }
  const Shape& in = inputs[0];
  return std::visit(
      Overloaded{
          [&](const Conv2D& s) { return conv_output_shape(s, in, "Conv2D"); },
          [&](const SeparableConv2D& s) { return conv_output_shape(s, in, "SeparableConv2D"); },
          [&](const BatchNorm& s) {
            require_channels(in, s.channels, "BatchNormalization");
            return in;
          },
          [&](const MaxPool2D& s) {
            require_rank(in, 4, "MaxPooling2D");
            const auto h = axis_window(in[1], s.pool_h, s.stride, s.padding);
            const auto w = axis_window(in[2], s.pool_w, s.stride, s.padding);
            return Shape{in[0], h.out, w.out, in[3]};
          },
          [&](const GlobalAvgPool2D&) {
            require_rank(in, 4, "GlobalAveragePooling2D");
            return Shape{in[0], in[3]};
          },
          [&](const Dense& s) {
            require_rank(in, 2, "Dense");
            require_channels(in, s.in_features, "Dense");
            return Shape{in[0], s.out_features};
          },
          [&](const Flatten&) {
            if (in.rank() < 1) throw ShapeError("Flatten needs a batch axis");
            std::size_t features = 1;
            for (std::size_t a = 1; a < in.rank(); ++a) features *= in[a];
            return Shape{in[0], features};
          },
          [&](const ResidualAdd&) {
            if (inputs[0] != inputs[1]) {
              throw ShapeError("Add operands differ: " + inputs[0].str() + " vs " +
                               inputs[1].str());
            }
            return in;
          },
          [&](const auto&) { return in; },
      },
      spec);
}

const Parameter* LayerParams::find(std::string_view name) const {
  for (const auto& p : entries_)
    if (p.name == name) return &p;
  return nullptr;
}

const Tensor& LayerParams::get(std::string_view name) const {
  if (const Parameter* p = find(name)) return p->value;
  throw InputError("no parameter named '" + std::string(name) + "'");
}

Tensor& LayerParams::get(std::string_view name) {
  return const_cast<Tensor&>(std::as_const(*this).get(name));
}

LayerParams make_params(const LayerSpec& spec, Rng* init) {
  validate(spec);
  std::vector<Parameter> out;
  std::visit(
      Overloaded{
          [&](const Conv2D& s) {
            Tensor k(Shape{s.kernel_h, s.kernel_w, s.in_channels, s.out_channels});
            if (init) {
              fill_uniform(k, *init,
                           std::sqrt(6.0f / float(s.kernel_h * s.kernel_w * s.in_channels)));
            }
            out.push_back({"kernel", std::move(k), true});
            if (s.use_bias) out.push_back({"bias", Tensor(Shape{s.out_channels}), true});
          },
          [&](const SeparableConv2D& s) {
            Tensor dw(Shape{s.kernel_h, s.kernel_w, s.in_channels});
            Tensor pw(Shape{1, 1, s.in_channels, s.out_channels});
            if (init) {
              fill_uniform(dw, *init, std::sqrt(6.0f / float(s.kernel_h * s.kernel_w)));
              fill_uniform(pw, *init, std::sqrt(6.0f / float(s.in_channels)));
            }
            out.push_back({"depthwise_kernel", std::move(dw), true});
            out.push_back({"pointwise_kernel", std::move(pw), true});
            if (s.use_bias) out.push_back({"bias", Tensor(Shape{s.out_channels}), true});
          },
          [&](const BatchNorm& s) {
            out.push_back({"gamma", Tensor::full(Shape{s.channels}, 1.0f), true});
            out.push_back({"beta", Tensor(Shape{s.channels}), true});
            out.push_back({"moving_mean", Tensor(Shape{s.channels}), false});
            out.push_back({"moving_variance", Tensor::full(Shape{s.channels}, 1.0f), false});
          },
          [&](const Dense& s) {
            Tensor w(Shape{s.in_features, s.out_features});
            if (init) {
              fill_uniform(w, *init, std::sqrt(6.0f / float(s.in_features + s.out_features)));
            }
            out.push_back({"kernel", std::move(w), true});
            if (s.use_bias) out.push_back({"bias", Tensor(Shape{s.out_features}), true});
          },
          [](const auto&) {},
      },
      spec);
  return LayerParams(std::move(out));
}

Tensor relu(const Tensor& input) {
  Tensor out(input.shape());
  auto x = input.values();
  auto y = out.values();
  for (std::size_t i = 0; i < x.size(); ++i) y[i] = x[i] > 0.0f ? x[i] : 0.0f;
  return out;
}

Tensor dense_forward(const Tensor& input, const Dense& spec, const LayerParams& params) {
  const Shape out_shape = output_shape(spec, std::span<const Shape>(&input.shape(), 1));
  const Tensor& w = params.get("kernel");
  if (w.shape() != Shape{spec.in_features, spec.out_features}) {
    throw ShapeError("dense kernel shape " + w.shape().str() + " does not match layer");
  }
  Tensor out(out_shape);
  const std::size_t n = input.dim(0);
  gemm(false, false, n, spec.out_features, spec.in_features, input.data(), w.data(), out.data(),
       false);
  if (spec.use_bias) {
    const Tensor& b = params.get("bias");
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < spec.out_features; ++j) out[i * spec.out_features + j] += b[j];
  }
  return out;
}

Tensor batchnorm_apply(const Tensor& input, const BatchNorm& spec, const LayerParams& params,
                       Mode mode, BatchNormCache* cache) {
  require_channels(input.shape(), spec.channels, "BatchNormalization");
  const std::size_t c = spec.channels;
  const std::size_t rows = input.numel() / c;
  const Tensor& gamma = params.get("gamma");
  const Tensor& beta = params.get("beta");

  std::vector<float> mean(c), var(c);
  if (mode == Mode::train) {
    if (rows == 0) throw InputError("batch normalisation over an empty batch");
    std::vector<double> sum(c, 0.0), sq(c, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
      const float* x = input.data() + r * c;
      for (std::size_t k = 0; k < c; ++k) sum[k] += x[k];
    }
    for (std::size_t k = 0; k < c; ++k) mean[k] = float(sum[k] / double(rows));
    for (std::size_t r = 0; r < rows; ++r) {
      const float* x = input.data() + r * c;
      for (std::size_t k = 0; k < c; ++k) {
        const double d = double(x[k]) - double(mean[k]);
        sq[k] += d * d;
      }
    }
    for (std::size_t k = 0; k < c; ++k) var[k] = float(sq[k] / double(rows));
  } else {
    const Tensor& mm = params.get("moving_mean");
    const Tensor& mv = params.get("moving_variance");
    std::copy(mm.values().begin(), mm.values().end(), mean.begin());
    std::copy(mv.values().begin(), mv.values().end(), var.begin());
  }

  std::vector<float> inv_std(c);
  for (std::size_t k = 0; k < c; ++k) inv_std[k] = 1.0f / std::sqrt(var[k] + spec.epsilon);

  Tensor out(input.shape());
  Tensor normalized;
  if (cache) normalized = Tensor(input.shape());
  for (std::size_t r = 0; r < rows; ++r) {
    const float* x = input.data() + r * c;
    float* y = out.data() + r * c;
    for (std::size_t k = 0; k < c; ++k) {
      const float xhat = (x[k] - mean[k]) * inv_std[k];
      if (cache) normalized[r * c + k] = xhat;
      y[k] = gamma[k] * xhat + beta[k];
    }
  }
  if (cache) {
    cache->normalized = std::move(normalized);
    cache->inv_std = std::move(inv_std);
    if (mode == Mode::train) {
      cache->batch_mean = std::move(mean);
      cache->batch_var = std::move(var);
    } else {
      cache->batch_mean.clear();
      cache->batch_var.clear();
    }
  }
  return out;
}

void update_moving_statistics(LayerParams& params, const BatchNorm& spec,
                              const BatchNormCache& cache) {
  if (cache.batch_mean.size() != spec.channels || cache.batch_var.size() != spec.channels) {
    throw StateError("batch statistics missing; moving statistics update needs a train-mode pass");
  }
  Tensor& mm = params.get("moving_mean");
  Tensor& mv = params.get("moving_variance");
  const float m = spec.momentum;
  for (std::size_t k = 0; k < spec.channels; ++k) {
    mm[k] = m * mm[k] + (1.0f - m) * cache.batch_mean[k];
    mv[k] = m * mv[k] + (1.0f - m) * cache.batch_var[k];
  }
}

Tensor batchnorm_forward(const Tensor& input, const BatchNorm& spec, LayerParams& params,
                         Mode mode) {
  BatchNormCache cache;
  Tensor out = batchnorm_apply(input, spec, params, mode, &cache);
  if (mode == Mode::train) update_moving_statistics(params, spec, cache);
  return out;
}

Tensor dropout_forward(const Tensor& input, const Dropout& spec, Mode mode, std::uint64_t seed,
                       Tensor* mask) {
  validate(spec);
  if (mode == Mode::infer || spec.rate == 0.0f) {
    if (mask) *mask = Tensor::ones_like(input);
    return input;
  }
  Tensor m(input.shape());
  if (spec.rate < 1.0f) {
    Rng rng(seed);
    const float keep_scale = 1.0f / (1.0f - spec.rate);
    for (float& v : m.values()) v = rng.uniform01() < spec.rate ? 0.0f : keep_scale;
  }
  Tensor out = elementwise_zip(input, m, ZipOp::mul);
  if (mask) *mask = std::move(m);
  return out;
}

Tensor residual_add(const Tensor& main, const Tensor& skip) {
  return elementwise_zip(main, skip, ZipOp::add);
}

Tensor softmax(const Tensor& logits) {
  if (logits.rank() == 0) throw ShapeError("softmax needs at least one axis");
  const std::size_t n = logits.dim(logits.rank() - 1);
  if (n == 0) throw ShapeError("softmax over an empty axis");
  Tensor out(logits.shape());
  const std::size_t rows = logits.numel() / n;
  for (std::size_t r = 0; r < rows; ++r) {
    const float* x = logits.data() + r * n;
    float* z = out.data() + r * n;
    const float mx = *std::max_element(x, x + n);
    double total = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
      z[k] = std::exp(x[k] - mx);
      total += z[k];
    }
    const float inv = float(1.0 / total);
    for (std::size_t k = 0; k < n; ++k) z[k] *= inv;
  }
  return out;
}

Tensor flatten(const Tensor& input) {
  if (input.rank() < 1) throw ShapeError("flatten needs a batch axis");
  return input.reshape(output_shape(Flatten{}, std::span<const Shape>(&input.shape(), 1)));
}

}  // namespace coronet::nn
