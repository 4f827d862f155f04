#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "coronet/error.hpp"
#include "coronet/network.hpp"
#include "coronet/rng.hpp"
#include "support/gradcheck.hpp"
#include "support/oracles.hpp"

using namespace coronet;
using coronet::testkit::random_tensor;

namespace {

// conv -> bn -> relu -> pool -> (skip: 1x1 conv) add -> flatten -> dropout -> dense -> softmax
Network small_net(Rng& rng) {
  Network net(Shape{6, 6, 2});
  net.add("conv", nn::Conv2D{2, 3, 3, 3, 1, nn::Padding::same}, {kGraphInput}, true, &rng);
  net.add("bn", nn::BatchNorm{3}, {0}, true, &rng);
  net.add("act", nn::ReLU{}, {1}, true, nullptr);
  net.add("pool", nn::MaxPool2D{2, 2, 2, nn::Padding::valid}, {2}, true, nullptr);
  net.add("skip", nn::Conv2D{2, 3, 1, 1, 2, nn::Padding::valid}, {kGraphInput}, true, &rng);
  net.add("add", nn::ResidualAdd{}, {3, 4}, true, nullptr);
  net.add("flatten", nn::Flatten{}, {5}, false, nullptr);
  net.add("dropout", nn::Dropout{0.3f}, {6}, false, nullptr);
  net.add("dense", nn::Dense{27, 4}, {7}, false, &rng);
  net.add("softmax", nn::Softmax{}, {8}, false, nullptr);
  return net;
}

}  // namespace

TEST(Network, ShapeInference) {
  Rng rng(1);
  const Network net = small_net(rng);
  EXPECT_EQ(net.node(*net.find("add")).sample_shape, (Shape{3, 3, 3}));
  EXPECT_EQ(net.output_shape(5), (Shape{5, 4}));
  EXPECT_FALSE(net.find("nope").has_value());
}

TEST(Network, RejectsBadGraphs) {
  Rng rng(1);
  Network net(Shape{4, 4, 1});
  net.add("a", nn::ReLU{}, {kGraphInput}, false, nullptr);
  EXPECT_THROW(net.add("a", nn::ReLU{}, {0}, false, nullptr), ConfigError);
  EXPECT_THROW(net.add("b", nn::Conv2D{2, 1, 1, 1}, {0}, false, &rng), ShapeError);
  EXPECT_THROW(net.add("c", nn::ReLU{}, {5}, false, nullptr), ConfigError);
  EXPECT_THROW(net.add("d", nn::ResidualAdd{}, {0}, false, nullptr), ShapeError);
}

TEST(Network, ForwardChecksInputShape) {
  Rng rng(1);
  const Network net = small_net(rng);
  EXPECT_THROW(net.forward(Tensor(Shape{1, 5, 6, 2}), nn::Mode::infer), InputError);
  EXPECT_THROW((void)ForwardTrace{}.output(), StateError);
}

TEST(Network, ForwardIsPure) {
  Rng rng(2);
  Network net = small_net(rng);
  const auto before = net.node(1).params.get("moving_mean");
  const auto trace = net.forward(random_tensor(Shape{3, 6, 6, 2}, rng), nn::Mode::train, 4);
  EXPECT_EQ(net.node(1).params.get("moving_mean"), before);
  net.apply_batch_statistics(trace);
  EXPECT_NE(net.node(1).params.get("moving_mean"), before);
}

// Redraws x until no pre-ReLU value and no pool runner-up sits within `gap`
// of a kink, so the finite-difference step cannot cross one.
Tensor well_conditioned_input(Network& net, Rng& rng, std::size_t n, float gap) {
  for (;;) {
    Tensor x = random_tensor(Shape{n, 6, 6, 2}, rng);
    const auto trace = net.forward(x, nn::Mode::infer);
    bool ok = true;
    for (float v : trace.nodes[1].output.values()) ok = ok && std::fabs(v) >= gap;
    const Tensor& a = trace.nodes[2].output;
    for (std::size_t b = 0; b < n; ++b)
      for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t c = 0; c < 3; ++c)
          for (std::size_t ch = 0; ch < 3; ++ch) {
            std::vector<float> win;
            for (std::size_t i = 0; i < 2; ++i)
              for (std::size_t j = 0; j < 2; ++j) win.push_back(a.at({b, 2 * r + i, 2 * c + j, ch}));
            std::sort(win.rbegin(), win.rend());
            if (win[0] > 0.0f && win[0] - win[1] < gap) ok = false;
          }
    if (ok) return x;
  }
}

TEST(Network, WholeGraphCrossEntropyGradient) {
  for (std::uint64_t s = 0; s < 5; ++s) {
    Rng rng(100 + s);
    Network net = small_net(rng);
    // Dropout is identity in infer mode; BN uses moving statistics there.
    const Tensor x = well_conditioned_input(net, rng, 2, 0.02f);
    EXPECT_LT(testkit::check_cross_entropy_gradients(net, x, {1, 3}), 1e-3);
  }
}

TEST(Network, WholeGraphTrainModeGradient) {
  Rng rng(7);
  Network net = small_net(rng);
  const Tensor x = random_tensor(Shape{3, 6, 6, 2}, rng);
  const Tensor w = random_tensor(net.output_shape(3), rng);
  EXPECT_LT(testkit::check_network_gradients(net, x, nn::Mode::train, 55, w), 1e-3);
}

TEST(Network, FrozenBackboneGetsZeroGradsAndInferBatchNorm) {
  Rng rng(3);
  Network net = small_net(rng);
  net.set_backbone_trainable(false);
  for (const auto& node : net.nodes())
    for (const auto& p : node.params) EXPECT_EQ(p.trainable, !node.backbone) << node.name << "/" << p.name;

  const Tensor x = random_tensor(Shape{2, 6, 6, 2}, rng);
  const auto trace = net.forward(x, nn::Mode::train, 1);
  EXPECT_EQ(trace.nodes[1].mode, nn::Mode::infer);
  const auto g = net.backward_cross_entropy(trace, {0, 1});
  for (float v : g.per_node[0][0].values()) EXPECT_EQ(v, 0.0f);
  double head = 0;
  for (float v : g.per_node[8][0].values()) head += std::abs(v);
  EXPECT_GT(head, 0.0);

  const auto before = net.node(1).params.get("moving_variance");
  net.apply_batch_statistics(trace);
  EXPECT_EQ(net.node(1).params.get("moving_variance"), before);

  net.set_backbone_trainable(true);
  EXPECT_FALSE(net.node(1).params.find("moving_mean")->trainable);
  EXPECT_TRUE(net.node(1).params.find("gamma")->trainable);
}

TEST(Network, ReplaceReinfersDownstream) {
  Rng rng(4);
  Network net = small_net(rng);
  net.replace(8, nn::Dense{27, 2}, &rng);
  EXPECT_EQ(net.output_shape(1), (Shape{1, 2}));
  EXPECT_EQ(net.node(8).params.get("kernel").shape(), (Shape{27, 2}));
  EXPECT_THROW(net.replace(8, nn::Dense{26, 2}, &rng), ShapeError);
}

TEST(Network, GenericCrossEntropyPathWithoutSoftmaxNode) {
  // Ending on a Dense layer: the loss gradient goes through the generic path.
  Rng rng(9);
  Network net(Shape{3});
  net.add("d", nn::Dense{3, 2}, {kGraphInput}, false, &rng);
  net.add("s", nn::Softmax{}, {0}, false, nullptr);
  net.add("id", nn::Dropout{0.0f}, {1}, false, nullptr);
  const Tensor x = random_tensor(Shape{2, 3}, rng);
  EXPECT_LT(testkit::check_cross_entropy_gradients(net, x, {0, 1}), 1e-3);
}
