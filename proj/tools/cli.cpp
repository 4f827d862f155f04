#include "cli.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>
#include <fmt/format.h>
#include <nlohmann/json.hpp>

#include "coronet/data.hpp"
#include "coronet/error.hpp"
#include "coronet/metrics.hpp"
#include "coronet/model.hpp"
#include "coronet/train.hpp"
#include "coronet/weights.hpp"
#include "staged_output.hpp"

namespace coronet::cli {

namespace {

namespace fs = std::filesystem;

struct RunConfig {
  std::string manifest;
  std::string val_manifest;
  std::string cm;
  std::string history;
  std::string variant = "full";
  std::size_t classes = 4;
  std::size_t input = 224;
  std::optional<std::uint64_t> seed;
  float lr = 1e-4f;
  std::size_t batch = 10;
  std::size_t epochs = 80;
  std::size_t folds = 4;
  std::string out;
  std::string weights;
  bool freeze_backbone = false;
  bool layers = false;
  bool svg = false;
};

model::ArchitectureConfig architecture(const RunConfig& rc, std::size_t classes) {
  model::ArchitectureConfig a;
  a.variant = rc.variant == "mini" ? model::Variant::mini : model::Variant::full;
  a.input_height = rc.input;
  a.input_width = rc.input;
  a.num_classes = classes;
  a.seed = Rng::derive(*rc.seed, 0x1417);
  return a;
}

train::TrainConfig train_config(const RunConfig& rc) {
  train::TrainConfig tc;
  tc.learning_rate = rc.lr;
  tc.batch_size = rc.batch;
  tc.epochs = rc.epochs;
  tc.seed = *rc.seed;
  tc.freeze_backbone = rc.freeze_backbone;
  return tc;
}

std::uint64_t require_seed(const RunConfig& rc) {
  if (!rc.seed) throw InputError("--seed is required for reproducible runs");
  return *rc.seed;
}

std::vector<std::string> class_names(data::Scheme scheme) {
  std::vector<std::string> names;
  for (auto l : data::scheme_labels(scheme)) names.emplace_back(data::label_name(l));
  return names;
}

std::string history_text(const train::History& h) {
  std::ostringstream s;
  train::write_history_csv(s, h);
  return s.str();
}

void log_history(std::ostream& out, const train::History& h, const std::string& prefix) {
  for (const auto& r : h) {
    out << fmt::format("{}epoch {:>3}  loss {:.4f}  acc {:.4f}", prefix, r.epoch, r.train_loss,
                       r.train_acc);
    if (r.val_loss) out << fmt::format("  val_loss {:.4f}  val_acc {:.4f}", *r.val_loss, *r.val_acc);
    out << '\n';
  }
}

train::Dataset load_split(const std::string& manifest, data::Scheme scheme, std::size_t input) {
  const auto m = data::merge_labels(data::load_manifest(manifest), scheme);
  if (m.size() == 0) throw InputError("manifest " + manifest + " lists no images");
  return data::load_dataset(m, scheme, input, input);
}

int cmd_train(const RunConfig& rc, std::ostream& out) {
  require_seed(rc);
  const auto scheme = data::scheme_for_classes(rc.classes);
  const train::Dataset train_set = load_split(rc.manifest, scheme, rc.input);
  std::optional<train::Dataset> val;
  if (!rc.val_manifest.empty()) val = load_split(rc.val_manifest, scheme, rc.input);

  StagedOutput stage(rc.out);
  Network net = model::build_coronet(architecture(rc, rc.classes));
  const auto history = train::fit(net, train_set, val ? &*val : nullptr, train_config(rc));
  log_history(out, history, "");
  model::save_weights(net, stage.file("weights.bin"));
  stage.write_text("history.csv", history_text(history));
  stage.commit();
  out << "wrote " << (fs::path(rc.out) / "weights.bin").string() << " and history.csv\n";
  return 0;
}

int cmd_kfold(const RunConfig& rc, std::ostream& out) {
  require_seed(rc);
  const auto scheme = data::scheme_for_classes(rc.classes);
  const auto manifest = data::merge_labels(data::load_manifest(rc.manifest), scheme);
  const auto folds = data::kfold_split(manifest, rc.folds, *rc.seed);
  const auto names = class_names(scheme);

  StagedOutput stage(rc.out);
  std::vector<metrics::MetricsReport> reports;
  for (std::size_t f = 0; f < folds.size(); ++f) {
    const auto train_m = data::select(manifest, data::training_indices(folds, f));
    const auto val_m = data::select(manifest, folds[f]);
    const auto train_set = data::load_dataset(train_m, scheme, rc.input, rc.input);
    const auto val_set = data::load_dataset(val_m, scheme, rc.input, rc.input);

    Network net = model::build_coronet(architecture(rc, rc.classes));
    const auto history = train::fit(net, train_set, &val_set, train_config(rc));
    log_history(out, history, fmt::format("fold {} ", f + 1));

    const auto ev = train::evaluate(net, val_set, rc.batch);
    const auto cm = metrics::confusion_from_predictions(
        std::span<const std::size_t>(val_set.labels), std::span<const std::size_t>(ev.predicted),
        names);
    const auto report = metrics::make_report(cm);
    const std::string tag = "fold" + std::to_string(f + 1);
    stage.write_text(tag + "_cm.csv", metrics::render_cm_csv(cm));
    stage.write_text(tag + "_history.csv", history_text(history));
    stage.write_text(tag + "_report.txt", metrics::render_report(report));
    stage.write_text(tag + "_report.json", metrics::report_to_json(report).dump(2) + "\n");
    reports.push_back(report);
  }
  const auto summary = metrics::fold_average(reports);
  const std::string text = metrics::render_fold_summary(summary);
  stage.write_text("kfold_report.txt", text);
  stage.write_text("kfold_report.json", metrics::fold_summary_to_json(summary).dump(2) + "\n");
  stage.commit();
  out << text;
  return 0;
}

int cmd_finetune(const RunConfig& rc, std::ostream& out) {
  require_seed(rc);
  if (rc.weights.empty()) throw InputError("--weights is required");
  // The source head arity comes from the file's dense_1 kernel.
  std::size_t source_classes = 0;
  for (const auto& e : model::read_weight_manifest(rc.weights)) {
    if (e.layer == "dense_1" && e.tensor == "kernel" && e.shape.rank() == 2) {
      source_classes = e.shape[1];
    }
  }
  if (source_classes == 0) source_classes = rc.classes;

  const auto scheme = data::scheme_for_classes(rc.classes);
  const train::Dataset train_set = load_split(rc.manifest, scheme, rc.input);
  std::optional<train::Dataset> val;
  if (!rc.val_manifest.empty()) val = load_split(rc.val_manifest, scheme, rc.input);

  StagedOutput stage(rc.out);
  Network net = model::build_coronet(architecture(rc, std::max<std::size_t>(source_classes, 2)));
  model::load_weights(net, rc.weights);
  const auto tc = train_config(rc);
  train::fine_tune(net, rc.classes, tc);
  const auto history = train::fit(net, train_set, val ? &*val : nullptr, tc);
  log_history(out, history, "");
  model::save_weights(net, stage.file("weights.bin"));
  stage.write_text("history.csv", history_text(history));
  stage.commit();
  return 0;
}

int cmd_count_params(const RunConfig& rc, std::ostream& out) {
  RunConfig local = rc;
  if (!local.seed) local.seed = 0;
  Network net = model::build_coronet(architecture(local, rc.classes));
  if (rc.freeze_backbone) net.set_backbone_trainable(false);
  const auto report = model::count_parameters(net);
  out << model::render_parameter_table(net, report);
  if (rc.layers) {
    out << '\n'
        << fmt::format("{:<32}{:<24}{:<20}{:>12}\n", "Layer", "Type", "Output", "Params");
    for (const auto& l : report.layers) {
      out << fmt::format("{:<32}{:<24}{:<20}{:>12}\n", l.name, l.type, l.output.str(),
                         l.params.total);
    }
  }
  return 0;
}

int cmd_metrics(const RunConfig& rc, std::ostream& out) {
  if (rc.cm.empty()) throw InputError("--cm is required");
  const auto cm = metrics::load_cm_csv(rc.cm);
  const auto report = metrics::make_report(cm);
  const std::string text = metrics::render_report(report);
  out << text;
  if (!rc.out.empty()) {
    StagedOutput stage(rc.out);
    stage.write_text("report.txt", text);
    stage.write_text("report.json", metrics::report_to_json(report).dump(2) + "\n");
    stage.commit();
  }
  return 0;
}

std::string svg_chart(const std::string& title, const std::vector<double>& epochs,
                      const std::vector<std::pair<std::string, std::vector<double>>>& series) {
  constexpr double width = 640, height = 400, left = 60, right = 20, top = 40, bottom = 50;
  double lo = 0.0, hi = 1.0;
  bool first = true;
  for (const auto& [name, ys] : series) {
    for (double y : ys) {
      if (std::isnan(y)) continue;
      lo = first ? y : std::min(lo, y);
      hi = first ? y : std::max(hi, y);
      first = false;
    }
  }
  if (hi - lo < 1e-12) hi = lo + 1.0;
  const double x0 = epochs.empty() ? 0 : epochs.front();
  const double x1 = epochs.size() < 2 ? x0 + 1 : epochs.back();
  auto px = [&](double x) { return left + (x - x0) / (x1 - x0) * (width - left - right); };
  auto py = [&](double y) { return height - bottom - (y - lo) / (hi - lo) * (height - top - bottom); };

  std::string svg = fmt::format(
      "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{}\" height=\"{}\" "
      "viewBox=\"0 0 {} {}\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
      width, height, width, height);
  svg += fmt::format("<text x=\"{}\" y=\"24\" font-family=\"sans-serif\" font-size=\"16\" "
                     "text-anchor=\"middle\">{}</text>\n",
                     width / 2, title);
  svg += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{2}\" y2=\"{1}\" stroke=\"black\"/>\n", left,
                     height - bottom, width - right);
  svg += fmt::format("<line x1=\"{0}\" y1=\"{1}\" x2=\"{0}\" y2=\"{2}\" stroke=\"black\"/>\n", left,
                     top, height - bottom);
  for (int t = 0; t <= 4; ++t) {
    const double y = lo + (hi - lo) * t / 4.0;
    svg += fmt::format("<text x=\"{}\" y=\"{:.1f}\" font-family=\"sans-serif\" font-size=\"11\" "
                       "text-anchor=\"end\">{:.3g}</text>\n",
                       left - 6, py(y) + 4, y);
  }
  svg += fmt::format("<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" "
                     "text-anchor=\"middle\">epoch</text>\n",
                     (left + width - right) / 2, height - 12);
  const char* colours[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728"};
  for (std::size_t s = 0; s < series.size(); ++s) {
    const auto& [name, ys] = series[s];
    std::string points;
    for (std::size_t i = 0; i < ys.size() && i < epochs.size(); ++i) {
      if (std::isnan(ys[i])) continue;
      points += fmt::format("{:.2f},{:.2f} ", px(epochs[i]), py(ys[i]));
    }
    if (points.empty()) continue;
    svg += fmt::format("<polyline fill=\"none\" stroke=\"{}\" stroke-width=\"2\" points=\"{}\"/>\n",
                       colours[s % 4], points);
    svg += fmt::format("<text x=\"{}\" y=\"{}\" font-family=\"sans-serif\" font-size=\"12\" "
                       "fill=\"{}\">{}</text>\n",
                       width - right - 120, top + 16 * double(s + 1), colours[s % 4], name);
  }
  return svg + "</svg>\n";
}

int cmd_curves(const RunConfig& rc, std::ostream& out) {
  if (rc.history.empty()) throw InputError("--history is required");
  std::ifstream in(rc.history);
  if (!in) throw InputError("cannot open history " + rc.history);
  const auto history = train::read_history_csv(in);

  const double nan = std::nan("");
  std::vector<double> epoch, tl, ta, vl, va;
  for (const auto& r : history) {
    epoch.push_back(double(r.epoch));
    tl.push_back(r.train_loss);
    ta.push_back(r.train_acc);
    vl.push_back(r.val_loss.value_or(nan));
    va.push_back(r.val_acc.value_or(nan));
  }
  auto as_json = [](const std::vector<double>& v) {
    nlohmann::json a = nlohmann::json::array();
    for (double x : v) a.push_back(std::isnan(x) ? nlohmann::json(nullptr) : nlohmann::json(x));
    return a;
  };
  nlohmann::json j;
  j["epoch"] = as_json(epoch);
  j["accuracy"] = {{"train", as_json(ta)}, {"validation", as_json(va)}};
  j["loss"] = {{"train", as_json(tl)}, {"validation", as_json(vl)}};

  StagedOutput stage(rc.out);
  stage.write_text("curves.json", j.dump(2) + "\n");
  if (rc.svg) {
    stage.write_text("accuracy.svg",
                     svg_chart("Accuracy", epoch, {{"train", ta}, {"validation", va}}));
    stage.write_text("loss.svg", svg_chart("Loss", epoch, {{"train", tl}, {"validation", vl}}));
  }
  stage.commit();
  out << "wrote curves for " << history.size() << " epochs to " << rc.out << '\n';
  return 0;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"coronet: CNN training, k-fold evaluation and metrics toolkit", "coronet"};
  app.require_subcommand(1);
  RunConfig rc;

  auto add_arch = [&](CLI::App* sub) {
    sub->add_option("--variant", rc.variant, "Backbone size")
        ->check(CLI::IsMember({"full", "mini"}));
    sub->add_option("--classes", rc.classes, "Number of classes")
        ->check(CLI::IsMember({2, 3, 4}));
    sub->add_option("--input", rc.input, "Square input size in pixels")->check(CLI::PositiveNumber);
  };
  auto add_training = [&](CLI::App* sub) {
    add_arch(sub);
    sub->add_option("--manifest", rc.manifest, "Dataset manifest CSV")->required();
    sub->add_option("--seed", rc.seed, "Seed for initialisation, shuffling and dropout");
    sub->add_option("--lr", rc.lr, "Adam learning rate")->check(CLI::PositiveNumber);
    sub->add_option("--batch", rc.batch, "Mini-batch size")->check(CLI::PositiveNumber);
    sub->add_option("--epochs", rc.epochs, "Training epochs");
    sub->add_option("--out", rc.out, "Output directory")->required();
  };

  auto* train_cmd = app.add_subcommand("train", "Fit a model and write weights + history");
  add_training(train_cmd);
  train_cmd->add_option("--val-manifest", rc.val_manifest, "Optional validation manifest");

  auto* kfold_cmd = app.add_subcommand("kfold", "Stratified k-fold cross-validation");
  add_training(kfold_cmd);
  kfold_cmd->add_option("--folds", rc.folds, "Number of folds")->check(CLI::Range(2, 100));

  auto* finetune_cmd = app.add_subcommand("finetune", "Load weights, swap the head, retrain");
  add_training(finetune_cmd);
  finetune_cmd->add_option("--weights", rc.weights, "Weights file to start from")->required();
  finetune_cmd->add_flag("--freeze-backbone", rc.freeze_backbone, "Train only the head");
  finetune_cmd->add_option("--val-manifest", rc.val_manifest, "Optional validation manifest");

  auto* count_cmd = app.add_subcommand("count-params", "Print the parameter table");
  add_arch(count_cmd);
  count_cmd->add_flag("--freeze-backbone", rc.freeze_backbone, "Count with a frozen backbone");
  count_cmd->add_flag("--layers", rc.layers, "Also print every layer");

  auto* metrics_cmd = app.add_subcommand("metrics", "Metrics report from a confusion matrix CSV");
  metrics_cmd->add_option("--cm", rc.cm, "Confusion matrix CSV")->required();
  metrics_cmd->add_option("--out", rc.out, "Optional directory for report.txt/report.json");

  auto* curves_cmd = app.add_subcommand("curves", "Per-epoch plot data from a history CSV");
  curves_cmd->add_option("--history", rc.history, "History CSV")->required();
  curves_cmd->add_option("--out", rc.out, "Output directory")->required();
  curves_cmd->add_flag("--svg", rc.svg, "Also draw accuracy.svg and loss.svg");

  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(std::move(reversed));
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code;
  }

  try {
    if (*train_cmd) return cmd_train(rc, out);
    if (*kfold_cmd) return cmd_kfold(rc, out);
    if (*finetune_cmd) return cmd_finetune(rc, out);
    if (*count_cmd) return cmd_count_params(rc, out);
    if (*metrics_cmd) return cmd_metrics(rc, out);
    if (*curves_cmd) return cmd_curves(rc, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return 1;
  }
  return 1;
}

}  // namespace coronet::cli
