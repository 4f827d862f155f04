#include "coronet/model.hpp"

#include <sstream>

#include <fmt/format.h>

#include "coronet/error.hpp"
#include "coronet/layers.hpp"

namespace coronet::model {

namespace {

struct Widths {
  std::size_t stem1, stem2, entry1, entry2, entry3, exit1, exit2, top1, top2;
  std::size_t middle_blocks;
};

// Mini widths are the full ones divided by 8.
Widths widths_for(Variant v) {
  if (v == Variant::full) return {32, 64, 128, 256, 728, 728, 1024, 1536, 2048, 8};
  return {4, 8, 16, 32, 91, 91, 128, 192, 256, 2};
}

class Builder {
 public:
  Builder(Network& net, Rng& init) : net_(net), init_(init) {}

  int conv(const std::string& name, int in, std::size_t cin, std::size_t cout, std::size_t k,
           std::size_t stride, nn::Padding pad) {
    return net_.add(name, nn::Conv2D{cin, cout, k, k, stride, pad, false}, {in}, true, &init_);
  }
  int sep(const std::string& name, int in, std::size_t cin, std::size_t cout) {
    return net_.add(name, nn::SeparableConv2D{cin, cout, 3, 3, 1, nn::Padding::same, false}, {in},
                    true, &init_);
  }
  int bn(const std::string& name, int in, std::size_t c) {
    return net_.add(name, nn::BatchNorm{c}, {in}, true, &init_);
  }
  int relu(const std::string& name, int in) { return net_.add(name, nn::ReLU{}, {in}, true, &init_); }
  int pool(const std::string& name, int in) {
    return net_.add(name, nn::MaxPool2D{3, 3, 2, nn::Padding::same}, {in}, true, &init_);
  }
  int add(const std::string& name, int a, int b) {
    return net_.add(name, nn::ResidualAdd{}, {a, b}, true, &init_);
  }

  // [ReLU] sep -> BN -> ReLU -> sep -> BN -> pool, plus 1x1/2 projection skip.
  int downsample_block(const std::string& block, int in, std::size_t cin, std::size_t mid,
                       std::size_t cout, bool leading_relu) {
    int skip = conv(block + "_residual", in, cin, cout, 1, 2, nn::Padding::same);
    skip = bn(block + "_residual_bn", skip, cout);
    int x = in;
    if (leading_relu) x = relu(block + "_sepconv1_act", x);
    x = sep(block + "_sepconv1", x, cin, mid);
    x = bn(block + "_sepconv1_bn", x, mid);
    x = relu(block + "_sepconv2_act", x);
    x = sep(block + "_sepconv2", x, mid, cout);
    x = bn(block + "_sepconv2_bn", x, cout);
    x = pool(block + "_pool", x);
    return add(block + "_add", x, skip);
  }

  int middle_block(const std::string& block, int in, std::size_t c) {
    int x = in;
    for (int i = 1; i <= 3; ++i) {
      const std::string s = block + "_sepconv" + std::to_string(i);
      x = relu(s + "_act", x);
      x = sep(s, x, c, c);
      x = bn(s + "_bn", x, c);
    }
    return add(block + "_add", x, in);
  }

 private:
  Network& net_;
  Rng& init_;
};

}  // namespace

Network build_coronet(const ArchitectureConfig& config) {
  if (config.num_classes < 2) throw ConfigError("num_classes must be at least 2");
  if (config.input_channels == 0) throw ConfigError("input_channels must be positive");
  if (config.head_dense_width == 0) throw ConfigError("head_dense_width must be positive");
  const Widths w = widths_for(config.variant);

  Network net(Shape{config.input_height, config.input_width, config.input_channels});
  Rng init(config.seed);
  Builder b(net, init);
  try {
    int x = b.conv("block1_conv1", kGraphInput, config.input_channels, w.stem1, 3, 2,
                   nn::Padding::valid);
    x = b.bn("block1_conv1_bn", x, w.stem1);
    x = b.relu("block1_conv1_act", x);
    x = b.conv("block1_conv2", x, w.stem1, w.stem2, 3, 1, nn::Padding::valid);
    x = b.bn("block1_conv2_bn", x, w.stem2);
    x = b.relu("block1_conv2_act", x);

    x = b.downsample_block("block2", x, w.stem2, w.entry1, w.entry1, false);
    x = b.downsample_block("block3", x, w.entry1, w.entry2, w.entry2, true);
    x = b.downsample_block("block4", x, w.entry2, w.entry3, w.entry3, true);
    for (std::size_t i = 0; i < w.middle_blocks; ++i) {
      x = b.middle_block("block" + std::to_string(5 + i), x, w.entry3);
    }
    const std::string exit = "block" + std::to_string(5 + w.middle_blocks);
    const std::string top = "block" + std::to_string(6 + w.middle_blocks);
    x = b.downsample_block(exit, x, w.entry3, w.exit1, w.exit2, true);
    x = b.sep(top + "_sepconv1", x, w.exit2, w.top1);
    x = b.bn(top + "_sepconv1_bn", x, w.top1);
    x = b.relu(top + "_sepconv1_act", x);
    x = b.sep(top + "_sepconv2", x, w.top1, w.top2);
    x = b.bn(top + "_sepconv2_bn", x, w.top2);
    x = b.relu(top + "_sepconv2_act", x);

    x = net.add("flatten", nn::Flatten{}, {x}, false, &init);
    const std::size_t features = net.node(std::size_t(x)).sample_shape[0];
    x = net.add("dropout", nn::Dropout{config.head_dropout_rate}, {x}, false, &init);
    x = net.add("dense", nn::Dense{features, config.head_dense_width, true}, {x}, false, &init);
    x = net.add("dense_act", nn::ReLU{}, {x}, false, &init);
    x = net.add("dense_1", nn::Dense{config.head_dense_width, config.num_classes, true}, {x},
                false, &init);
    net.add("softmax", nn::Softmax{}, {x}, false, &init);
  } catch (const ShapeError& e) {
    throw ConfigError(fmt::format("input {}x{}x{} does not fit the backbone stride chain: {}",
                                  config.input_height, config.input_width, config.input_channels,
                                  e.what()));
  }
  return net;
}

ParameterReport count_parameters(const Network& net) {
  ParameterReport report;
  for (const Node& node : net.nodes()) {
    LayerCount lc;
    lc.name = node.name;
    lc.type = std::string(nn::layer_type_name(node.spec));
    lc.output = node.sample_shape;
    lc.backbone = node.backbone;
    for (const nn::Parameter& p : node.params) {
      const std::size_t n = p.value.numel();
      lc.params.total += n;
      (p.trainable ? lc.params.trainable : lc.params.non_trainable) += n;
    }
    auto fold = [&](ParameterCount& into) {
      into.total += lc.params.total;
      into.trainable += lc.params.trainable;
      into.non_trainable += lc.params.non_trainable;
    };
    fold(report.totals);
    if (node.backbone) fold(report.backbone);
    report.layers.push_back(std::move(lc));
  }
  return report;
}

namespace {

std::string shape_text(const Shape& s) {
  std::string out;
  for (std::size_t i = 0; i < s.rank(); ++i) {
    if (i) out += " x ";
    out += std::to_string(s[i]);
  }
  return out;
}

std::string grouped(std::size_t v) {
  std::string digits = std::to_string(v);
  std::string out;
  for (std::size_t i = 0; i < digits.size(); ++i) {
    if (i && (digits.size() - i) % 3 == 0) out += ',';
    out += digits[i];
  }
  return out;
}

}  // namespace

std::string render_parameter_table(const Network& net, const ParameterReport& report) {
  std::ostringstream out;
  out << fmt::format("{:<28}{:<20}{:>12}\n", "Layer (type)", "Output Shape", "Param #");
  out << std::string(60, '=') << '\n';
  Shape backbone_out;
  for (const Node& node : net.nodes())
    if (node.backbone) backbone_out = node.sample_shape;
  if (report.backbone.total > 0 || backbone_out.rank() > 0) {
    out << fmt::format("{:<28}{:<20}{:>12}\n", "xception (Model)", shape_text(backbone_out),
                       report.backbone.total);
  }
  for (std::size_t i = 0; i < net.size(); ++i) {
    const Node& node = net.node(i);
    if (node.backbone) continue;
    if (std::holds_alternative<nn::ReLU>(node.spec) ||
        std::holds_alternative<nn::Softmax>(node.spec)) {
      continue;
    }
    const LayerCount& lc = report.layers[i];
    out << fmt::format("{:<28}{:<20}{:>12}\n", lc.name + " (" + lc.type + ")",
                       shape_text(lc.output), lc.params.total);
  }
  out << std::string(60, '=') << '\n';
  out << "Total Parameters: " << grouped(report.totals.total) << '\n';
  out << "Trainable Parameters: " << grouped(report.totals.trainable) << '\n';
  out << "Non-trainable Parameters: " << grouped(report.totals.non_trainable) << '\n';
  return out.str();
}

Prediction predict(const Network& net, const Tensor& images) {
  const ForwardTrace trace = net.forward(images, nn::Mode::infer);
  Prediction p;
  p.probabilities = trace.output();
  if (p.probabilities.rank() != 2) throw ShapeError("network output is not [N, classes]");
  const std::size_t n = p.probabilities.dim(0), k = p.probabilities.dim(1);
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < k; ++c)
      if (p.probabilities[i * k + c] > p.probabilities[i * k + best]) best = c;
    p.labels.push_back(best);
  }
  return p;
}

}  // namespace coronet::model
