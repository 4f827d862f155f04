#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <iosfwd>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "coronet/network.hpp"
#include "coronet/tensor.hpp"

namespace coronet::train {

/// Images [N, H, W, C] with one class index per image.
struct Dataset {
  Tensor images;
  std::vector<std::size_t> labels;

  std::size_t size() const noexcept { return labels.size(); }
  /// Gathers the listed samples into a new dataset, in the listed order.
  Dataset subset(const std::vector<std::size_t>& indices) const;
};

/// Mean of -ln(max(p[i, label_i], 1e-12)). Rows must sum to 1 within 1e-3.
double cross_entropy_loss(const Tensor& probabilities, const std::vector<std::size_t>& labels);

struct AdamHyper {
  float learning_rate = 1e-4f;
  float beta1 = 0.9f;
  float beta2 = 0.999f;
  float epsilon = 1e-8f;
};

/// First/second moments for a fixed list of parameter tensors.
struct AdamState {
  AdamHyper hyper;
  std::vector<Tensor> m;
  std::vector<Tensor> v;
  std::uint64_t step = 0;
};

/// One bias-corrected Adam update of `params` in place. Moments are created on
/// the first call; later calls require the same shapes.
void adam_step(AdamState& state, const std::vector<Tensor*>& params,
               const std::vector<const Tensor*>& grads);

/// Adam over the trainable parameters of a network, visited in node order.
class Adam {
 public:
  explicit Adam(AdamHyper hyper) { state_.hyper = hyper; }
  void step(Network& net, const Gradients& grads);
  const AdamState& state() const noexcept { return state_; }

 private:
  AdamState state_;
};

struct EpochRecord {
  std::size_t epoch = 0;  // 1-based
  double train_loss = 0.0;
  double train_acc = 0.0;
  std::optional<double> val_loss;
  std::optional<double> val_acc;
};

struct TrainConfig {
  float learning_rate = 1e-4f;
  std::size_t batch_size = 10;
  std::size_t epochs = 80;
  bool shuffle_each_epoch = true;
  std::uint64_t seed = 0;
  bool freeze_backbone = false;
  // Called after every epoch; returning false stops training early.
  std::function<bool(const EpochRecord&)> on_epoch_end;
};

using History = std::vector<EpochRecord>;

/// Loss/accuracy of a network in inference mode plus the argmax predictions.
struct Evaluation {
  double loss = 0.0;
  double accuracy = 0.0;
  std::vector<std::size_t> predicted;
};

Evaluation evaluate(const Network& net, const Dataset& data, std::size_t batch_size);

/// Mini-batch Adam over `train`. Samples are reshuffled before every epoch from
/// a stream derived from config.seed; the final partial batch is kept. Train
/// loss/accuracy are the running values over the epoch's train-mode batches,
/// validation metrics (when `val` is given) come from an inference pass.
History fit(Network& net, const Dataset& train, const Dataset* val, const TrainConfig& config);

/// Swaps the final Dense layer for a fresh one with `new_num_classes` outputs
/// and, with config.freeze_backbone, marks backbone parameters non-trainable.
void fine_tune(Network& net, std::size_t new_num_classes, const TrainConfig& config);

/// CSV with header epoch,train_loss,train_acc,val_loss,val_acc; absent
/// validation values are left empty.
void write_history_csv(std::ostream& out, const History& history);
History read_history_csv(std::istream& in);

}  // namespace coronet::train
