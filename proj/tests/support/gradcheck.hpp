#pragma once

#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

#include "coronet/network.hpp"

namespace coronet::testkit {

inline constexpr float kFiniteDifferenceStep = 1e-3f;

// ||a - n|| / max(||a||, ||n||), Euclidean norms over the whole gradient.
double gradient_relative_error(const std::vector<double>& analytic,
                               const std::vector<double>& numeric);

// Central differences of L = sum(w * y) against Network::backward seeded with
// w, for the graph input and every trainable parameter. Returns the worst
// relative error over those tensors.
double check_network_gradients(Network& net, const Tensor& x, nn::Mode mode, std::uint64_t seed,
                               const Tensor& upstream);

// Same for the mean cross-entropy of a softmax-terminated network
// (exercises the fused gradient).
double check_cross_entropy_gradients(Network& net, const Tensor& x,
                                     const std::vector<std::size_t>& labels);

struct GradCase {
  std::string description;
  double error;
};

// One randomised small configuration of `layer` (a layer_type_name, or
// "SoftmaxCrossEntropy" / "BatchNormalizationInfer").
GradCase gradient_case(std::string_view layer, std::uint64_t index);
std::vector<std::string> gradient_layer_types();

}  // namespace coronet::testkit
