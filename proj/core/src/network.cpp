#include "coronet/network.hpp"

#include <algorithm>
#include <variant>

#include "coronet/error.hpp"
#include "coronet/grad.hpp"

namespace coronet {

namespace {

Shape with_batch(std::size_t batch, const Shape& sample) {
  std::vector<std::size_t> dims{batch};
  dims.insert(dims.end(), sample.dims().begin(), sample.dims().end());
  return Shape(std::move(dims));
}

Shape drop_batch(const Shape& s) {
  return Shape(std::vector<std::size_t>(s.dims().begin() + 1, s.dims().end()));
}

bool gamma_trainable(const nn::LayerParams& params) {
  const nn::Parameter* gamma = params.find("gamma");
  return gamma && gamma->trainable;
}

}  // namespace

const Tensor& ForwardTrace::output() const {
  if (nodes.empty()) throw StateError("no forward pass recorded");
  return nodes.back().output;
}

Network::Network(Shape sample_input) : sample_input_(std::move(sample_input)) {}

Shape Network::infer_sample_shape(const nn::LayerSpec& spec, const std::vector<int>& inputs) const {
  std::vector<Shape> in;
  for (int i : inputs) {
    if (i == kGraphInput) {
      in.push_back(with_batch(1, sample_input_));
    } else if (i >= 0 && std::size_t(i) < nodes_.size()) {
      in.push_back(with_batch(1, nodes_[std::size_t(i)].sample_shape));
    } else {
      throw ConfigError("layer input " + std::to_string(i) + " does not precede it");
    }
  }
  return drop_batch(nn::output_shape(spec, in));
}

int Network::add(std::string name, nn::LayerSpec spec, std::vector<int> inputs, bool backbone,
                 Rng* init) {
  if (find(name)) throw ConfigError("duplicate layer name '" + name + "'");
  nn::validate(spec);
  Node node;
  node.sample_shape = infer_sample_shape(spec, inputs);
  node.params = nn::make_params(spec, init);
  node.name = std::move(name);
  node.spec = std::move(spec);
  node.inputs = std::move(inputs);
  node.backbone = backbone;
  nodes_.push_back(std::move(node));
  return int(nodes_.size() - 1);
}

std::optional<std::size_t> Network::find(std::string_view name) const {
  for (std::size_t i = 0; i < nodes_.size(); ++i)
    if (nodes_[i].name == name) return i;
  return std::nullopt;
}

Shape Network::output_shape(std::size_t batch) const {
  if (nodes_.empty()) return with_batch(batch, sample_input_);
  return with_batch(batch, nodes_.back().sample_shape);
}

void Network::replace(std::size_t index, nn::LayerSpec spec, Rng* init) {
  Node& node = nodes_.at(index);
  nn::validate(spec);
  node.sample_shape = infer_sample_shape(spec, node.inputs);
  node.params = nn::make_params(spec, init);
  node.spec = std::move(spec);
  for (std::size_t i = index + 1; i < nodes_.size(); ++i) {
    nodes_[i].sample_shape = infer_sample_shape(nodes_[i].spec, nodes_[i].inputs);
  }
}

void Network::set_backbone_trainable(bool trainable) {
  for (Node& node : nodes_) {
    if (!node.backbone) continue;
    for (nn::Parameter& p : node.params) {
      const bool moving = p.name == "moving_mean" || p.name == "moving_variance";
      p.trainable = trainable && !moving;
    }
  }
}

ForwardTrace Network::forward(const Tensor& input, nn::Mode mode, std::uint64_t seed) const {
  if (input.rank() != sample_input_.rank() + 1 || drop_batch(input.shape()) != sample_input_) {
    throw InputError("network expects input [N]" + sample_input_.str() + ", got " +
                     input.shape().str());
  }
  ForwardTrace trace;
  trace.input = input;
  trace.nodes.resize(nodes_.size());
  auto operand = [&](int i) -> const Tensor& {
    return i == kGraphInput ? trace.input : trace.nodes[std::size_t(i)].output;
  };

  for (std::size_t idx = 0; idx < nodes_.size(); ++idx) {
    const Node& node = nodes_[idx];
    NodeTrace& t = trace.nodes[idx];
    t.mode = mode;
    const Tensor& x = operand(node.inputs[0]);
    t.output = std::visit(
        [&](const auto& s) -> Tensor {
          using S = std::decay_t<decltype(s)>;
          if constexpr (std::is_same_v<S, nn::Conv2D>) {
            return nn::conv2d_forward(x, s, node.params);
          } else if constexpr (std::is_same_v<S, nn::SeparableConv2D>) {
            return nn::separable_conv2d_forward(x, s, node.params);
          } else if constexpr (std::is_same_v<S, nn::BatchNorm>) {
            if (!gamma_trainable(node.params)) t.mode = nn::Mode::infer;
            return nn::batchnorm_apply(x, s, node.params, t.mode, &t.batchnorm);
          } else if constexpr (std::is_same_v<S, nn::ReLU>) {
            return nn::relu(x);
          } else if constexpr (std::is_same_v<S, nn::MaxPool2D>) {
            return nn::maxpool2d_forward(x, s, &t.argmax);
          } else if constexpr (std::is_same_v<S, nn::GlobalAvgPool2D>) {
            return nn::global_avgpool2d_forward(x);
          } else if constexpr (std::is_same_v<S, nn::Dense>) {
            return nn::dense_forward(x, s, node.params);
          } else if constexpr (std::is_same_v<S, nn::Dropout>) {
            return nn::dropout_forward(x, s, mode, Rng::derive(seed, idx), &t.mask);
          } else if constexpr (std::is_same_v<S, nn::Flatten>) {
            return nn::flatten(x);
          } else if constexpr (std::is_same_v<S, nn::ResidualAdd>) {
            return nn::residual_add(x, operand(node.inputs[1]));
          } else {
            return nn::softmax(x);
          }
        },
        node.spec);
  }
  return trace;
}

Gradients Network::backward(const ForwardTrace& trace, const Tensor& grad_output,
                            bool want_input_grad) const {
  if (trace.nodes.size() != nodes_.size() || nodes_.empty()) {
    throw StateError("backward needs a forward trace of this network");
  }
  if (grad_output.shape() != trace.output().shape()) {
    throw ShapeError("output gradient " + grad_output.shape().str() + " vs output " +
                     trace.output().shape().str());
  }
  return backward_from(trace, nodes_.size() - 1, grad_output, want_input_grad);
}

Gradients Network::backward_cross_entropy(const ForwardTrace& trace,
                                          const std::vector<std::size_t>& labels,
                                          bool want_input_grad) const {
  if (trace.nodes.size() != nodes_.size() || nodes_.empty()) {
    throw StateError("backward needs a forward trace of this network");
  }
  const Tensor& q = trace.output();
  if (std::holds_alternative<nn::Softmax>(nodes_.back().spec)) {
    Tensor dlogits = grad::softmax_cross_entropy_backward(q, labels);
    const int feeder = nodes_.back().inputs[0];
    Gradients g;
    if (feeder == kGraphInput) {
      g.per_node.resize(nodes_.size());
      if (want_input_grad) g.input = std::move(dlogits);
      return g;
    }
    g = backward_from(trace, std::size_t(feeder), std::move(dlogits), want_input_grad);
    return g;
  }
  // Generic route: d/dq of -mean(log q_label).
  if (q.rank() != 2 || q.dim(0) != labels.size()) throw ShapeError("labels do not match output");
  Tensor dq(q.shape());
  const std::size_t n = labels.size(), classes = q.dim(1);
  for (std::size_t i = 0; i < n; ++i) {
    if (labels[i] >= classes) throw InputError("label out of range");
    const float p = std::max(q[i * classes + labels[i]], 1e-12f);
    dq[i * classes + labels[i]] = -1.0f / (float(n) * p);
  }
  return backward_from(trace, nodes_.size() - 1, std::move(dq), want_input_grad);
}

Gradients Network::backward_from(const ForwardTrace& trace, std::size_t start, Tensor grad,
                                 bool want_input_grad) const {
  const std::size_t count = nodes_.size();

  // A node needs a gradient if it, or anything upstream of it, owns trainable
  // parameters (or the caller wants d/d input).
  std::vector<bool> needs(count, false);
  for (std::size_t i = 0; i < count; ++i) {
    bool need = false;
    for (const auto& p : nodes_[i].params) need = need || p.trainable;
    for (int in : nodes_[i].inputs) {
      need = need || (in == kGraphInput ? want_input_grad : bool(needs[std::size_t(in)]));
    }
    needs[i] = need;
  }
  auto input_needs = [&](int in) {
    return in == kGraphInput ? want_input_grad : bool(needs[std::size_t(in)]);
  };

  Gradients out;
  out.per_node.resize(count);
  for (std::size_t i = 0; i < count; ++i) {
    for (const auto& p : nodes_[i].params) out.per_node[i].emplace_back(p.value.shape());
  }

  std::vector<Tensor> pending(count);
  std::vector<bool> has(count, false);
  pending[start] = std::move(grad);
  has[start] = true;
  bool has_input = false;
  auto accumulate = [&](int in, Tensor g) {
    if (in == kGraphInput) {
      if (!want_input_grad) return;
      if (!has_input) {
        out.input = std::move(g);
        has_input = true;
      } else {
        out.input = elementwise_zip(out.input, g, ZipOp::add);
      }
      return;
    }
    const auto k = std::size_t(in);
    if (!needs[k]) return;
    if (!has[k]) {
      pending[k] = std::move(g);
      has[k] = true;
    } else {
      pending[k] = elementwise_zip(pending[k], g, ZipOp::add);
    }
  };
  auto operand = [&](int i) -> const Tensor& {
    return i == kGraphInput ? trace.input : trace.nodes[std::size_t(i)].output;
  };

  for (std::size_t step = start + 1; step-- > 0;) {
    if (!has[step] || !needs[step]) continue;
    const Node& node = nodes_[step];
    const NodeTrace& t = trace.nodes[step];
    const Tensor dy = std::move(pending[step]);
    const int first = node.inputs[0];
    const Tensor& x = operand(first);
    const bool need_dx = input_needs(first);

    grad::LayerGrads lg = std::visit(
        [&](const auto& s) -> grad::LayerGrads {
          using S = std::decay_t<decltype(s)>;
          grad::LayerGrads r;
          if constexpr (std::is_same_v<S, nn::Conv2D>) {
            return grad::conv2d_backward(x, s, node.params, dy, need_dx);
          } else if constexpr (std::is_same_v<S, nn::SeparableConv2D>) {
            return grad::separable_conv2d_backward(x, s, node.params, dy, need_dx);
          } else if constexpr (std::is_same_v<S, nn::BatchNorm>) {
            return grad::batchnorm_backward(t.batchnorm, s, node.params, t.mode, dy);
          } else if constexpr (std::is_same_v<S, nn::ReLU>) {
            r.inputs.push_back(grad::relu_backward(x, dy));
          } else if constexpr (std::is_same_v<S, nn::MaxPool2D>) {
            r.inputs.push_back(grad::maxpool2d_backward(x.shape(), t.argmax, dy));
          } else if constexpr (std::is_same_v<S, nn::GlobalAvgPool2D>) {
            r.inputs.push_back(grad::global_avgpool2d_backward(x.shape(), dy));
          } else if constexpr (std::is_same_v<S, nn::Dense>) {
            return grad::dense_backward(x, s, node.params, dy, need_dx);
          } else if constexpr (std::is_same_v<S, nn::Dropout>) {
            r.inputs.push_back(grad::dropout_backward(t.mask, dy));
          } else if constexpr (std::is_same_v<S, nn::Flatten>) {
            r.inputs.push_back(dy.reshape(x.shape()));
          } else if constexpr (std::is_same_v<S, nn::ResidualAdd>) {
            r.inputs.push_back(dy);
            r.inputs.push_back(dy);
          } else {
            r.inputs.push_back(grad::softmax_backward(t.output, dy));
          }
          return r;
        },
        node.spec);

    for (std::size_t p = 0; p < node.params.size(); ++p) {
      if (node.params[p].trainable) out.per_node[step][p] = std::move(lg.params[p]);
    }
    for (std::size_t k = 0; k < node.inputs.size(); ++k) {
      if (input_needs(node.inputs[k])) {
        accumulate(node.inputs[k], std::move(lg.inputs[k]));
      }
    }
  }
  return out;
}

void Network::apply_batch_statistics(const ForwardTrace& trace) {
  if (trace.nodes.size() != nodes_.size()) throw StateError("trace does not match network");
  for (std::size_t i = 0; i < nodes_.size(); ++i) {
    const auto* bn = std::get_if<nn::BatchNorm>(&nodes_[i].spec);
    if (!bn || trace.nodes[i].mode != nn::Mode::train) continue;
    nn::update_moving_statistics(nodes_[i].params, *bn, trace.nodes[i].batchnorm);
  }
}

}  // namespace coronet
