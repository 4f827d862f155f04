#include "coronet/train.hpp"

#include <cmath>
#include <istream>
#include <numeric>
#include <ostream>
#include <sstream>
#include <variant>

#include <fmt/format.h>

#include "coronet/error.hpp"

namespace coronet::train {

namespace {

std::size_t argmax_row(const Tensor& q, std::size_t row) {
  const std::size_t n = q.dim(1);
  std::size_t best = 0;
  for (std::size_t k = 1; k < n; ++k)
    if (q[row * n + k] > q[row * n + best]) best = k;
  return best;
}

double summed_loss(const Tensor& q, const std::vector<std::size_t>& labels) {
  const std::size_t n = q.dim(1);
  double total = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    total -= std::log(std::max(double(q[i * n + labels[i]]), 1e-12));
  }
  return total;
}

}  // namespace

Dataset Dataset::subset(const std::vector<std::size_t>& indices) const {
  const Shape& s = images.shape();
  std::vector<std::size_t> dims(s.dims().begin(), s.dims().end());
  const std::size_t stride = dims.empty() || dims[0] == 0 ? 0 : images.numel() / dims[0];
  dims[0] = indices.size();
  Dataset out{Tensor(Shape(dims)), {}};
  out.labels.reserve(indices.size());
  for (std::size_t i = 0; i < indices.size(); ++i) {
    const std::size_t src = indices[i];
    if (src >= labels.size()) throw InputError("sample index out of range");
    std::copy(images.data() + src * stride, images.data() + (src + 1) * stride,
              out.images.data() + i * stride);
    out.labels.push_back(labels[src]);
  }
  return out;
}

double cross_entropy_loss(const Tensor& probabilities, const std::vector<std::size_t>& labels) {
  if (probabilities.rank() != 2 || probabilities.dim(0) != labels.size()) {
    throw ShapeError("probabilities " + probabilities.shape().str() + " vs " +
                     std::to_string(labels.size()) + " labels");
  }
  if (labels.empty()) throw InputError("cross-entropy over an empty batch");
  const std::size_t n = probabilities.dim(1);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] >= n) {
      throw InputError("label " + std::to_string(labels[i]) + " outside [0," + std::to_string(n) +
                       ")");
    }
    double row = 0.0;
    for (std::size_t k = 0; k < n; ++k) row += probabilities[i * n + k];
    if (std::abs(row - 1.0) > 1e-3) throw InputError("probability row does not sum to 1");
  }
  return summed_loss(probabilities, labels) / double(labels.size());
}

void adam_step(AdamState& state, const std::vector<Tensor*>& params,
               const std::vector<const Tensor*>& grads) {
  if (params.size() != grads.size()) throw ShapeError("parameter/gradient count mismatch");
  if (state.m.empty()) {
    for (const Tensor* p : params) {
      state.m.emplace_back(p->shape());
      state.v.emplace_back(p->shape());
    }
  }
  if (state.m.size() != params.size()) throw ShapeError("optimizer state does not match parameters");
  ++state.step;
  const AdamHyper& h = state.hyper;
  const double t = double(state.step);
  const float correct1 = float(1.0 / (1.0 - std::pow(double(h.beta1), t)));
  const float correct2 = float(1.0 / (1.0 - std::pow(double(h.beta2), t)));
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& theta = *params[i];
    const Tensor& g = *grads[i];
    if (g.shape() != theta.shape() || state.m[i].shape() != theta.shape()) {
      throw ShapeError("adam shapes differ for parameter " + std::to_string(i));
    }
    float* m = state.m[i].data();
    float* v = state.v[i].data();
    for (std::size_t k = 0; k < theta.numel(); ++k) {
      m[k] = h.beta1 * m[k] + (1.0f - h.beta1) * g[k];
      v[k] = h.beta2 * v[k] + (1.0f - h.beta2) * g[k] * g[k];
      const float m_hat = m[k] * correct1;
      const float v_hat = v[k] * correct2;
      theta[k] -= h.learning_rate * m_hat / (std::sqrt(v_hat) + h.epsilon);
    }
  }
}

void Adam::step(Network& net, const Gradients& grads) {
  std::vector<Tensor*> params;
  std::vector<const Tensor*> g;
  for (std::size_t i = 0; i < net.size(); ++i) {
    auto& node = net.node(i);
    for (std::size_t p = 0; p < node.params.size(); ++p) {
      if (!node.params[p].trainable) continue;
      params.push_back(&node.params[p].value);
      g.push_back(&grads.per_node.at(i).at(p));
    }
  }
  adam_step(state_, params, g);
}

Evaluation evaluate(const Network& net, const Dataset& data, std::size_t batch_size) {
  if (data.size() == 0) throw InputError("evaluation over an empty dataset");
  if (batch_size == 0) throw InputError("batch size must be positive");
  Evaluation ev;
  double loss = 0.0;
  std::size_t correct = 0;
  for (std::size_t start = 0; start < data.size(); start += batch_size) {
    std::vector<std::size_t> idx(std::min(batch_size, data.size() - start));
    std::iota(idx.begin(), idx.end(), start);
    const Dataset batch = data.subset(idx);
    const ForwardTrace trace = net.forward(batch.images, nn::Mode::infer);
    const Tensor& q = trace.output();
    loss += summed_loss(q, batch.labels);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const std::size_t p = argmax_row(q, i);
      ev.predicted.push_back(p);
      correct += p == batch.labels[i];
    }
  }
  ev.loss = loss / double(data.size());
  ev.accuracy = double(correct) / double(data.size());
  return ev;
}

History fit(Network& net, const Dataset& train, const Dataset* val, const TrainConfig& config) {
  if (train.size() == 0) throw InputError("training set is empty");
  if (config.batch_size == 0) throw InputError("batch size must be positive");
  const std::size_t classes = net.output_shape(1)[1];
  for (std::size_t label : train.labels) {
    if (label >= classes) throw InputError("label exceeds the head arity");
  }

  Adam adam(AdamHyper{config.learning_rate});
  History history;
  std::vector<std::size_t> order(train.size());
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    if (config.shuffle_each_epoch) {
      Rng rng(Rng::derive(config.seed, epoch));
      rng.shuffle(std::span<std::size_t>(order));
    }
    double loss_sum = 0.0;
    std::size_t correct = 0;
    std::size_t batch_no = 0;
    for (std::size_t start = 0; start < order.size(); start += config.batch_size, ++batch_no) {
      const std::vector<std::size_t> idx(
          order.begin() + long(start),
          order.begin() + long(std::min(order.size(), start + config.batch_size)));
      const Dataset batch = train.subset(idx);
      const std::uint64_t dropout_seed =
          Rng::derive(Rng::derive(config.seed ^ 0xD50F5EEDULL, epoch), batch_no);
      const ForwardTrace trace = net.forward(batch.images, nn::Mode::train, dropout_seed);
      const Tensor& q = trace.output();
      loss_sum += summed_loss(q, batch.labels);
      for (std::size_t i = 0; i < idx.size(); ++i) correct += argmax_row(q, i) == batch.labels[i];

      const Gradients grads = net.backward_cross_entropy(trace, batch.labels);
      net.apply_batch_statistics(trace);
      adam.step(net, grads);
    }
    EpochRecord rec;
    rec.epoch = epoch;
    rec.train_loss = loss_sum / double(train.size());
    rec.train_acc = double(correct) / double(train.size());
    if (val && val->size() > 0) {
      const Evaluation ev = evaluate(net, *val, config.batch_size);
      rec.val_loss = ev.loss;
      rec.val_acc = ev.accuracy;
    }
    history.push_back(rec);
    if (config.on_epoch_end && !config.on_epoch_end(rec)) break;
  }
  return history;
}

void fine_tune(Network& net, std::size_t new_num_classes, const TrainConfig& config) {
  if (new_num_classes < 2) throw InputError("a classification head needs at least 2 classes");
  std::optional<std::size_t> head;
  for (std::size_t i = net.size(); i-- > 0;) {
    if (std::holds_alternative<nn::Dense>(net.node(i).spec)) {
      head = i;
      break;
    }
  }
  if (!head) throw InputError("network has no dense classification head");
  nn::Dense spec = std::get<nn::Dense>(net.node(*head).spec);
  spec.out_features = new_num_classes;
  Rng init(Rng::derive(config.seed, 0xF17E7D));
  net.replace(*head, spec, &init);
  if (config.freeze_backbone) net.set_backbone_trainable(false);
}

void write_history_csv(std::ostream& out, const History& history) {
  out << "epoch,train_loss,train_acc,val_loss,val_acc\n";
  for (const EpochRecord& r : history) {
    out << fmt::format("{},{:.9g},{:.9g},", r.epoch, r.train_loss, r.train_acc);
    if (r.val_loss) out << fmt::format("{:.9g}", *r.val_loss);
    out << ',';
    if (r.val_acc) out << fmt::format("{:.9g}", *r.val_acc);
    out << '\n';
  }
}

History read_history_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw ParseError(1, "empty history file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != "epoch,train_loss,train_acc,val_loss,val_acc") {
    throw ParseError(1, "unexpected history header '" + line + "'");
  }
  History history;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (line.back() == ',') cells.emplace_back();
    if (cells.size() != 5) throw ParseError(line_no, "expected 5 columns");
    auto number = [&](const std::string& s) {
      try {
        std::size_t used = 0;
        const double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
      } catch (const std::exception&) {
        throw ParseError(line_no, "not a number: '" + s + "'");
      }
    };
    EpochRecord r;
    r.epoch = std::size_t(number(cells[0]));
    r.train_loss = number(cells[1]);
    r.train_acc = number(cells[2]);
    if (!cells[3].empty()) r.val_loss = number(cells[3]);
    if (!cells[4].empty()) r.val_acc = number(cells[4]);
    history.push_back(r);
  }
  return history;
}

}  // namespace coronet::train
