#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "coronet/network.hpp"

namespace coronet::model {

enum class Variant { full, mini };

struct ArchitectureConfig {
  Variant variant = Variant::full;
  std::size_t input_height = 224;
  std::size_t input_width = 224;
  std::size_t input_channels = 3;
  std::size_t num_classes = 4;
  float head_dropout_rate = 0.5f;
  std::size_t head_dense_width = 256;
  std::uint64_t seed = 0;  // parameter initialisation stream
};

/// Xception-topology backbone followed by Flatten -> Dropout -> Dense(256) ->
/// ReLU -> Dense(num_classes) -> Softmax.
///
/// Backbone (full widths; mini divides every width by 8 and keeps 2 middle blocks):
///   entry:  conv3x3/2 (32) -> conv3x3 (64), valid padding, each BN + ReLU;
///           three downsample blocks (128, 256, 728) of
///           [ReLU] sep3x3 -> BN -> ReLU -> sep3x3 -> BN -> maxpool3x3/2
///           added to a 1x1/2 conv + BN projection of the block input
///           (the first block has no leading ReLU);
///   middle: 8 blocks of 3 x (ReLU -> sep3x3(728) -> BN) with identity skip;
///   exit:   downsample block (728, 1024), then sep3x3(1536) -> BN -> ReLU ->
///           sep3x3(2048) -> BN -> ReLU.
/// Convolutions carry no bias; the head dense layers do.
/// Throws ConfigError if the input is too small for the stride chain.
Network build_coronet(const ArchitectureConfig& config);

struct ParameterCount {
  std::size_t total = 0;
  std::size_t trainable = 0;
  std::size_t non_trainable = 0;
};

struct LayerCount {
  std::string name;
  std::string type;
  Shape output;  // per sample
  bool backbone = false;
  ParameterCount params;
};

struct ParameterReport {
  ParameterCount totals;
  ParameterCount backbone;
  std::vector<LayerCount> layers;
};

ParameterReport count_parameters(const Network& net);

/// Summary table: the backbone collapsed into one row, then each head layer
/// (activations are folded into the preceding layer, as Keras prints them).
std::string render_parameter_table(const Network& net, const ParameterReport& report);

struct Prediction {
  Tensor probabilities;              // [N, classes]
  std::vector<std::size_t> labels;   // argmax per row
};

/// Inference-mode forward pass. Throws InputError on an image shape mismatch.
Prediction predict(const Network& net, const Tensor& images);

}  // namespace coronet::model
