#include "gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <stdexcept>

#include <fmt/format.h>

#include "coronet/rng.hpp"
#include "coronet/train.hpp"
#include "oracles.hpp"

namespace coronet::testkit {

double gradient_relative_error(const std::vector<double>& analytic,
                               const std::vector<double>& numeric) {
  double diff = 0.0, na = 0.0, nn_ = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    diff += (analytic[i] - numeric[i]) * (analytic[i] - numeric[i]);
    na += analytic[i] * analytic[i];
    nn_ += numeric[i] * numeric[i];
  }
  const double scale = std::sqrt(std::max(na, nn_));
  if (scale < 1e-12) return std::sqrt(diff);
  return std::sqrt(diff) / scale;
}

namespace {

using LossFn = std::function<double()>;

std::vector<double> central_differences(std::span<float> values, const LossFn& loss) {
  std::vector<double> out(values.size());
  const double h = kFiniteDifferenceStep;
  for (std::size_t i = 0; i < values.size(); ++i) {
    const float orig = values[i];
    values[i] = orig + kFiniteDifferenceStep;
    const double plus = loss();
    values[i] = orig - kFiniteDifferenceStep;
    const double minus = loss();
    values[i] = orig;
    out[i] = (plus - minus) / (2.0 * h);
  }
  return out;
}

std::vector<double> widen(const Tensor& t) { return {t.values().begin(), t.values().end()}; }

double weighted_sum(const Tensor& y, const Tensor& w) {
  double acc = 0.0;
  for (std::size_t i = 0; i < y.numel(); ++i) acc += double(y[i]) * double(w[i]);
  return acc;
}

double worst_over_tensors(Network& net, Tensor& x, const Gradients& grads, const LossFn& loss) {
  double worst = gradient_relative_error(widen(grads.input), central_differences(x.values(), loss));
  for (std::size_t k = 0; k < net.size(); ++k) {
    auto& params = net.node(k).params;
    for (std::size_t p = 0; p < params.size(); ++p) {
      if (!params[p].trainable) continue;
      const auto numeric = central_differences(params[p].value.values(), loss);
      worst = std::max(worst, gradient_relative_error(widen(grads.per_node[k][p]), numeric));
    }
  }
  return worst;
}

}  // namespace

double check_network_gradients(Network& net, const Tensor& x_in, nn::Mode mode,
                               std::uint64_t seed, const Tensor& upstream) {
  Tensor x = x_in;
  const ForwardTrace trace = net.forward(x, mode, seed);
  const Gradients grads = net.backward(trace, upstream, true);
  const LossFn loss = [&] { return weighted_sum(net.forward(x, mode, seed).output(), upstream); };
  return worst_over_tensors(net, x, grads, loss);
}

double check_cross_entropy_gradients(Network& net, const Tensor& x_in,
                                     const std::vector<std::size_t>& labels) {
  Tensor x = x_in;
  const ForwardTrace trace = net.forward(x, nn::Mode::infer);
  const Gradients grads = net.backward_cross_entropy(trace, labels, true);
  const LossFn loss = [&] {
    const Tensor q = net.forward(x, nn::Mode::infer).output();
    // Computed here rather than through the library's loss.
    double acc = 0.0;
    const std::size_t classes = q.shape()[1];
    for (std::size_t i = 0; i < labels.size(); ++i) acc -= std::log(double(q[i * classes + labels[i]]));
    return acc / double(labels.size());
  };
  return worst_over_tensors(net, x, grads, loss);
}

std::vector<std::string> gradient_layer_types() {
  return {"Conv2D",   "SeparableConv2D", "BatchNormalization", "BatchNormalizationInfer",
          "ReLU",     "MaxPooling2D",    "GlobalAveragePooling2D", "Dense",
          "Dropout",  "Flatten",         "Add",                "Softmax",
          "SoftmaxCrossEntropy"};
}

namespace {

nn::Padding pick_padding(Rng& rng) { return rng.below(2) ? nn::Padding::same : nn::Padding::valid; }

void randomise_trainable(Network& net, Rng& rng) {
  for (auto& node : net.nodes())
    for (auto& p : node.params)
      if (p.trainable)
        for (float& v : p.value.values()) v = rng.uniform(-1.0f, 1.0f);
}

// Keeps every element at least `gap` away from zero so ReLU kinks are not
// straddled by the finite-difference step.
Tensor away_from_zero(const Shape& shape, Rng& rng, float gap) {
  Tensor t(shape);
  for (float& v : t.values()) {
    const float mag = rng.uniform(gap, 1.0f);
    v = rng.below(2) ? mag : -mag;
  }
  return t;
}

}  // namespace

GradCase gradient_case(std::string_view layer, std::uint64_t index) {
  Rng rng(Rng::derive(0x6AD1E47ULL, index * 131 + layer.size() * 7 + std::uint64_t(layer[0])));
  const std::size_t n = 1 + rng.below(3);
  const std::size_t h = 3 + rng.below(4), w = 3 + rng.below(4);
  const std::size_t c = 1 + rng.below(3);
  const Shape image{h, w, c};
  auto batch_of = [&](const Shape& s) {
    std::vector<std::size_t> dims{n};
    for (std::size_t i = 0; i < s.rank(); ++i) dims.push_back(s[i]);
    return Shape(dims);
  };

  std::string desc = fmt::format("{} #{} n={} {}x{}x{}", layer, index, n, h, w, c);
  nn::Mode mode = nn::Mode::infer;
  std::uint64_t seed = 0;
  Shape sample = image;
  Tensor x;
  std::unique_ptr<Network> net;

  if (layer == "Conv2D" || layer == "SeparableConv2D") {
    const std::size_t k = 1 + rng.below(3);
    const std::size_t stride = 1 + rng.below(2);
    const std::size_t cout = 1 + rng.below(3);
    const nn::Padding pad = pick_padding(rng);
    const bool bias = rng.below(2);
    net = std::make_unique<Network>(image);
    if (layer == "Conv2D") {
      net->add("l", nn::Conv2D{c, cout, k, k, stride, pad, bias}, {kGraphInput}, false, &rng);
    } else {
      net->add("l", nn::SeparableConv2D{c, cout, k, k, stride, pad, bias}, {kGraphInput}, false,
               &rng);
    }
    desc += fmt::format(" k={} s={} cout={}", k, stride, cout);
    randomise_trainable(*net, rng);
    x = random_tensor(batch_of(image), rng);
  } else if (layer == "BatchNormalization" || layer == "BatchNormalizationInfer") {
    net = std::make_unique<Network>(image);
    net->add("l", nn::BatchNorm{c}, {kGraphInput}, false, &rng);
    randomise_trainable(*net, rng);
    auto& params = net->node(0).params;
    for (float& v : params.get("moving_mean").values()) v = rng.uniform(-0.5f, 0.5f);
    for (float& v : params.get("moving_variance").values()) v = rng.uniform(0.5f, 2.0f);
    mode = layer == "BatchNormalization" ? nn::Mode::train : nn::Mode::infer;
    x = random_tensor(batch_of(image), rng, -2.0f, 2.0f);
  } else if (layer == "ReLU") {
    net = std::make_unique<Network>(image);
    net->add("l", nn::ReLU{}, {kGraphInput}, false, nullptr);
    x = away_from_zero(batch_of(image), rng, 0.01f);
  } else if (layer == "MaxPooling2D") {
    const std::size_t k = 2 + rng.below(2);
    const std::size_t stride = 1 + rng.below(2);
    const nn::Padding pad = pick_padding(rng);
    net = std::make_unique<Network>(image);
    net->add("l", nn::MaxPool2D{k, k, stride, pad}, {kGraphInput}, false, nullptr);
    desc += fmt::format(" k={} s={}", k, stride);
    // Distinct values spaced well beyond the step, so the argmax is stable.
    x = Tensor(batch_of(image));
    std::vector<std::size_t> perm(x.numel());
    std::iota(perm.begin(), perm.end(), 0);
    rng.shuffle(std::span<std::size_t>(perm));
    for (std::size_t i = 0; i < perm.size(); ++i) x[i] = 0.01f * float(perm[i]) - 1.0f;
  } else if (layer == "GlobalAveragePooling2D") {
    net = std::make_unique<Network>(image);
    net->add("l", nn::GlobalAvgPool2D{}, {kGraphInput}, false, nullptr);
    x = random_tensor(batch_of(image), rng);
  } else if (layer == "Dense" || layer == "Add" || layer == "Softmax" ||
             layer == "SoftmaxCrossEntropy") {
    const std::size_t in = 1 + rng.below(8);
    const std::size_t out = 2 + rng.below(5);
    sample = Shape{in};
    net = std::make_unique<Network>(sample);
    if (layer == "Dense") {
      net->add("l", nn::Dense{in, out, rng.below(2) == 1}, {kGraphInput}, false, &rng);
    } else if (layer == "Add") {
      net->add("proj", nn::Dense{in, in}, {kGraphInput}, false, &rng);
      net->add("l", nn::ResidualAdd{}, {kGraphInput, 0}, false, nullptr);
    } else if (layer == "Softmax") {
      sample = Shape{out};
      net = std::make_unique<Network>(sample);
      net->add("l", nn::Softmax{}, {kGraphInput}, false, nullptr);
    } else {
      net->add("logits", nn::Dense{in, out}, {kGraphInput}, false, &rng);
      net->add("l", nn::Softmax{}, {0}, false, nullptr);
    }
    randomise_trainable(*net, rng);
    if (layer == "Add") {
      // Keeps 1 + W away from zero so the residual sum never cancels.
      for (float& v : net->node(0).params.get("kernel").values()) v *= 0.5f;
    }
    // Kernel gradients scale with x; near-zero inputs would sink them below
    // the float32 difference noise floor (about 1e-5 absolute).
    x = layer == "Softmax" ? random_tensor(batch_of(sample), rng, -2.0f, 2.0f)
                           : away_from_zero(batch_of(sample), rng, 0.1f);
    desc = fmt::format("{} #{} n={} sample={}", layer, index, n, sample.str());
    if (layer == "SoftmaxCrossEntropy") {
      std::vector<std::size_t> labels(n);
      for (auto& l : labels) l = rng.below(out);
      return {desc, check_cross_entropy_gradients(*net, x, labels)};
    }
  } else if (layer == "Dropout") {
    const float rate = rng.uniform(0.1f, 0.7f);
    net = std::make_unique<Network>(image);
    net->add("l", nn::Dropout{rate}, {kGraphInput}, false, nullptr);
    mode = nn::Mode::train;
    seed = rng.next_u64();
    x = random_tensor(batch_of(image), rng);
    desc += fmt::format(" rate={:.2f}", rate);
  } else if (layer == "Flatten") {
    net = std::make_unique<Network>(image);
    net->add("l", nn::Flatten{}, {kGraphInput}, false, nullptr);
    x = random_tensor(batch_of(image), rng);
  } else {
    throw std::invalid_argument("unknown layer type for gradient check");
  }

  Tensor upstream = random_tensor(net->output_shape(n), rng);
  if (layer == "Softmax") {
    // Rows of a softmax sum to 1, so centring each upstream row only shifts
    // the loss by a constant; it removes rounding noise proportional to |w|.
    const std::size_t k = upstream.shape()[1];
    for (std::size_t r = 0; r < n; ++r) {
      double mean = 0.0;
      for (std::size_t j = 0; j < k; ++j) mean += upstream[r * k + j];
      mean /= double(k);
      for (std::size_t j = 0; j < k; ++j) upstream[r * k + j] -= float(mean);
    }
  }
  return {desc, check_network_gradients(*net, x, mode, seed, upstream)};
}

}  // namespace coronet::testkit
