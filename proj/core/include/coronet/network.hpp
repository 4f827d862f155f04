#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "coronet/layers.hpp"
#include "coronet/rng.hpp"
#include "coronet/tensor.hpp"

namespace coronet {

/// Marks the graph input in Node::inputs.
inline constexpr int kGraphInput = -1;

struct Node {
  std::string name;
  nn::LayerSpec spec;
  std::vector<int> inputs;  // indices of earlier nodes, or kGraphInput
  nn::LayerParams params;
  bool backbone = false;    // feature extractor (as opposed to the classification head)
  Shape sample_shape;       // output shape of one sample (no batch axis)
};

/// Everything a forward pass keeps for the backward pass.
struct NodeTrace {
  Tensor output;
  nn::Mode mode = nn::Mode::infer;      // mode this node actually ran in
  nn::BatchNormCache batchnorm;
  std::vector<std::size_t> argmax;      // max pooling
  Tensor mask;                          // dropout
};

struct ForwardTrace {
  Tensor input;
  std::vector<NodeTrace> nodes;

  bool empty() const noexcept { return nodes.empty(); }
  const Tensor& output() const;
};

/// Per-node, per-parameter gradients (LayerParams order). Non-trainable
/// parameters hold zero tensors.
struct Gradients {
  std::vector<std::vector<Tensor>> per_node;
  Tensor input;  // d loss / d graph input, only when requested
};

/// Layer sequence with skip edges, kept in topological (insertion) order.
class Network {
 public:
  /// `sample_input` is the shape of a single input sample, e.g. [H, W, C].
  explicit Network(Shape sample_input);

  /// Appends a layer fed by `inputs`. Parameters are initialised from `init`
  /// when given. Throws ShapeError/ConfigError if the layer does not fit.
  int add(std::string name, nn::LayerSpec spec, std::vector<int> inputs, bool backbone,
          Rng* init);

  const Shape& sample_input() const noexcept { return sample_input_; }
  const std::vector<Node>& nodes() const noexcept { return nodes_; }
  std::vector<Node>& nodes() noexcept { return nodes_; }
  const Node& node(std::size_t i) const { return nodes_.at(i); }
  Node& node(std::size_t i) { return nodes_.at(i); }
  std::optional<std::size_t> find(std::string_view name) const;
  std::size_t size() const noexcept { return nodes_.size(); }
  Shape output_shape(std::size_t batch) const;

  /// Replaces the layer at `index` (same inputs) with freshly initialised
  /// parameters and re-runs shape inference downstream.
  void replace(std::size_t index, nn::LayerSpec spec, Rng* init);

  /// Sets the trainable flag of every parameter of backbone nodes. Moving
  /// statistics stay non-trainable either way.
  void set_backbone_trainable(bool trainable);

  /// Pure forward pass. In train mode, batch-norm layers whose gamma is
  /// trainable use batch statistics; frozen ones use their moving statistics.
  /// Dropout masks derive from `seed` and the node index.
  ForwardTrace forward(const Tensor& input, nn::Mode mode, std::uint64_t seed = 0) const;

  /// Reverse-mode pass seeded with d loss / d output.
  Gradients backward(const ForwardTrace& trace, const Tensor& grad_output,
                     bool want_input_grad = false) const;

  /// Gradients of mean cross-entropy. When the last node is Softmax the fused
  /// (q - onehot)/N gradient is injected at its input.
  Gradients backward_cross_entropy(const ForwardTrace& trace,
                                   const std::vector<std::size_t>& labels,
                                   bool want_input_grad = false) const;

  /// Folds the batch statistics of a train-mode pass into moving statistics.
  void apply_batch_statistics(const ForwardTrace& trace);

 private:
  Gradients backward_from(const ForwardTrace& trace, std::size_t start, Tensor grad,
                          bool want_input_grad) const;
  Shape infer_sample_shape(const nn::LayerSpec& spec, const std::vector<int>& inputs) const;

  Shape sample_input_;
  std::vector<Node> nodes_;
};

}  // namespace coronet
