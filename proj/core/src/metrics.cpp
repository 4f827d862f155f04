#include "coronet/metrics.hpp"

#include <fstream>
#include <istream>
#include <sstream>

#include <fmt/format.h>

#include "coronet/error.hpp"

namespace coronet::metrics {

namespace {

double ratio(std::uint64_t num, std::uint64_t den, bool& undefined) {
  undefined = den == 0;
  return undefined ? 0.0 : double(num) / double(den);
}

std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> cells;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) {
    const auto b = cell.find_first_not_of(" \t");
    const auto e = cell.find_last_not_of(" \t\r");
    cells.push_back(b == std::string::npos ? std::string() : cell.substr(b, e - b + 1));
  }
  if (!line.empty() && line.back() == ',') cells.emplace_back();
  return cells;
}

std::string pct(double fraction, int decimals = 1) {
  return fmt::format("{:.{}f}", fraction * 100.0, decimals);
}

nlohmann::json class_json(const ClassMetrics& m) {
  nlohmann::json j{{"class", m.name},           {"tp", m.tp},
                   {"fp", m.fp},                {"fn", m.fn},
                   {"tn", m.tn},                {"precision", m.precision},
                   {"recall", m.recall},        {"specificity", m.specificity},
                   {"f_measure", m.f_measure}};
  nlohmann::json flags = nlohmann::json::array();
  if (m.precision_undefined) flags.push_back("precision");
  if (m.recall_undefined) flags.push_back("recall");
  if (m.specificity_undefined) flags.push_back("specificity");
  if (m.f_measure_undefined) flags.push_back("f_measure");
  j["zero_denominator"] = flags;
  return j;
}

nlohmann::json aggregate_json(const Aggregate& a) {
  return {{"precision", a.precision},
          {"recall", a.recall},
          {"specificity", a.specificity},
          {"f_measure", a.f_measure}};
}

}  // namespace

ConfusionMatrix::ConfusionMatrix(std::vector<std::string> classes)
    : classes_(std::move(classes)),
      counts_(classes_.size(), std::vector<std::uint64_t>(classes_.size(), 0)) {}

ConfusionMatrix::ConfusionMatrix(std::vector<std::string> classes,
                                 std::vector<std::vector<std::uint64_t>> counts)
    : classes_(std::move(classes)), counts_(std::move(counts)) {
  if (counts_.size() != classes_.size()) {
    throw InputError("confusion matrix has " + std::to_string(counts_.size()) + " rows for " +
                     std::to_string(classes_.size()) + " classes");
  }
  for (const auto& row : counts_) {
    if (row.size() != classes_.size()) throw InputError("confusion matrix is not square");
  }
}

std::uint64_t ConfusionMatrix::at(std::size_t actual, std::size_t predicted) const {
  return counts_.at(actual).at(predicted);
}

void ConfusionMatrix::add(std::size_t actual, std::size_t predicted, std::uint64_t n) {
  counts_.at(actual).at(predicted) += n;
}

std::uint64_t ConfusionMatrix::total() const {
  std::uint64_t t = 0;
  for (const auto& row : counts_)
    for (auto v : row) t += v;
  return t;
}

std::uint64_t ConfusionMatrix::trace() const {
  std::uint64_t t = 0;
  for (std::size_t i = 0; i < counts_.size(); ++i) t += counts_[i][i];
  return t;
}

std::uint64_t ConfusionMatrix::row_sum(std::size_t actual) const {
  std::uint64_t t = 0;
  for (auto v : counts_.at(actual)) t += v;
  return t;
}

std::uint64_t ConfusionMatrix::column_sum(std::size_t predicted) const {
  std::uint64_t t = 0;
  for (const auto& row : counts_) t += row.at(predicted);
  return t;
}

ConfusionMatrix ConfusionMatrix::permuted(const std::vector<std::size_t>& order) const {
  if (order.size() != size()) throw InputError("permutation size mismatch");
  std::vector<std::string> names;
  std::vector<std::vector<std::uint64_t>> counts(size(), std::vector<std::uint64_t>(size()));
  for (std::size_t i = 0; i < size(); ++i) {
    names.push_back(classes_.at(order[i]));
    for (std::size_t j = 0; j < size(); ++j) counts[i][j] = at(order[i], order[j]);
  }
  return ConfusionMatrix(std::move(names), std::move(counts));
}

ConfusionMatrix confusion_from_predictions(std::span<const std::size_t> actual,
                                           std::span<const std::size_t> predicted,
                                           std::vector<std::string> classes) {
  if (actual.size() != predicted.size()) {
    throw InputError("actual and predicted label counts differ");
  }
  ConfusionMatrix cm(std::move(classes));
  for (std::size_t i = 0; i < actual.size(); ++i) {
    if (actual[i] >= cm.size() || predicted[i] >= cm.size()) {
      throw InputError("label index " + std::to_string(std::max(actual[i], predicted[i])) +
                       " is not a known class");
    }
    cm.add(actual[i], predicted[i]);
  }
  return cm;
}

ConfusionMatrix confusion_from_predictions(std::span<const std::string> actual,
                                           std::span<const std::string> predicted,
                                           std::vector<std::string> classes) {
  auto index_of = [&](const std::string& name) {
    for (std::size_t i = 0; i < classes.size(); ++i)
      if (classes[i] == name) return i;
    throw InputError("unknown label '" + name + "'");
  };
  std::vector<std::size_t> a, p;
  for (const auto& s : actual) a.push_back(index_of(s));
  for (const auto& s : predicted) p.push_back(index_of(s));
  return confusion_from_predictions(std::span<const std::size_t>(a),
                                    std::span<const std::size_t>(p), std::move(classes));
}

double overall_accuracy(const ConfusionMatrix& cm) {
  const std::uint64_t total = cm.total();
  if (total == 0) throw InputError("accuracy of an empty confusion matrix");
  return double(cm.trace()) / double(total);
}

double micro_precision(const ConfusionMatrix& cm) {
  std::uint64_t tp = 0, tp_fp = 0;
  for (std::size_t c = 0; c < cm.size(); ++c) {
    tp += cm.at(c, c);
    tp_fp += cm.column_sum(c);
  }
  if (tp_fp == 0) throw InputError("micro precision of an empty confusion matrix");
  return double(tp) / double(tp_fp);
}

ClassMetrics class_metrics(const ConfusionMatrix& cm, std::size_t cls) {
  if (cls >= cm.size()) throw InputError("class index out of range");
  ClassMetrics m;
  m.name = cm.classes()[cls];
  m.tp = cm.at(cls, cls);
  m.fp = cm.column_sum(cls) - m.tp;
  m.fn = cm.row_sum(cls) - m.tp;
  m.tn = cm.total() - m.tp - m.fp - m.fn;
  m.precision = ratio(m.tp, m.tp + m.fp, m.precision_undefined);
  m.recall = ratio(m.tp, m.tp + m.fn, m.recall_undefined);
  m.specificity = ratio(m.tn, m.tn + m.fp, m.specificity_undefined);
  const double pr = m.precision + m.recall;
  m.f_measure_undefined = pr == 0.0;
  m.f_measure = m.f_measure_undefined ? 0.0 : 2.0 * m.precision * m.recall / pr;
  return m;
}

Aggregate macro_average(std::span<const ClassMetrics> per_class) {
  if (per_class.empty()) throw InputError("macro average over zero classes");
  Aggregate a;
  for (const ClassMetrics& m : per_class) {
    a.precision += m.precision;
    a.recall += m.recall;
    a.specificity += m.specificity;
    a.f_measure += m.f_measure;
  }
  const double n = double(per_class.size());
  a.precision /= n;
  a.recall /= n;
  a.specificity /= n;
  a.f_measure /= n;
  return a;
}

MetricsReport make_report(const ConfusionMatrix& cm) {
  MetricsReport r;
  r.classes = cm.classes();
  for (std::size_t c = 0; c < cm.size(); ++c) r.per_class.push_back(class_metrics(cm, c));
  r.macro = macro_average(r.per_class);
  r.accuracy = overall_accuracy(cm);
  r.correct = cm.trace();
  r.total = cm.total();
  return r;
}

FoldSummary fold_average(std::span<const MetricsReport> reports) {
  if (reports.empty()) throw InputError("fold average over zero folds");
  FoldSummary s;
  s.classes = reports.front().classes;
  s.per_class_mean.resize(s.classes.size());
  for (std::size_t c = 0; c < s.classes.size(); ++c) s.per_class_mean[c].name = s.classes[c];
  for (const MetricsReport& r : reports) {
    if (r.classes != s.classes) throw InputError("folds disagree on their class list");
    s.folds.push_back({r.macro, r.accuracy});
    s.mean.macro.precision += r.macro.precision;
    s.mean.macro.recall += r.macro.recall;
    s.mean.macro.specificity += r.macro.specificity;
    s.mean.macro.f_measure += r.macro.f_measure;
    s.mean.accuracy += r.accuracy;
    for (std::size_t c = 0; c < s.classes.size(); ++c) {
      s.per_class_mean[c].precision += r.per_class[c].precision;
      s.per_class_mean[c].recall += r.per_class[c].recall;
      s.per_class_mean[c].specificity += r.per_class[c].specificity;
      s.per_class_mean[c].f_measure += r.per_class[c].f_measure;
    }
  }
  const double k = double(reports.size());
  s.mean.macro.precision /= k;
  s.mean.macro.recall /= k;
  s.mean.macro.specificity /= k;
  s.mean.macro.f_measure /= k;
  s.mean.accuracy /= k;
  for (ClassMetrics& m : s.per_class_mean) {
    m.precision /= k;
    m.recall /= k;
    m.specificity /= k;
    m.f_measure /= k;
  }
  return s;
}

ConfusionMatrix parse_cm_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 1;
  if (!std::getline(in, line)) throw ParseError(1, "empty confusion-matrix file");
  const auto header = split_csv(line);
  if (header.size() < 2) throw ParseError(1, "header needs a corner cell and class names");
  if (header[0] != "actual\\predicted") {
    throw ParseError(1, "corner cell must read actual\\predicted, got '" + header[0] + "'");
  }
  const std::vector<std::string> classes(header.begin() + 1, header.end());
  const std::size_t n = classes.size();

  std::vector<std::vector<std::uint64_t>> counts;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const auto cells = split_csv(line);
    if (cells.size() != n + 1) {
      throw ParseError(line_no, "row has " + std::to_string(cells.size() - 1) +
                                    " counts, matrix is " + std::to_string(n) + " wide");
    }
    const std::size_t row = counts.size();
    if (row >= n) throw ParseError(line_no, "more rows than classes (matrix not square)");
    if (cells[0] != classes[row]) {
      throw ParseError(line_no, "row class '" + cells[0] + "' does not match column '" +
                                    classes[row] + "'");
    }
    std::vector<std::uint64_t> values;
    for (std::size_t col = 1; col <= n; ++col) {
      const std::string& cell = cells[col];
      const std::string where = "cell (row " + std::to_string(row + 1) + " '" + cells[0] +
                                "', column " + std::to_string(col) + " '" + classes[col - 1] + "')";
      if (!cell.empty() && cell[0] == '-') throw ParseError(line_no, "negative count in " + where);
      if (cell.empty() || cell.find_first_not_of("0123456789") != std::string::npos) {
        throw ParseError(line_no, "non-integer count '" + cell + "' in " + where);
      }
      values.push_back(std::stoull(cell));
    }
    counts.push_back(std::move(values));
  }
  if (counts.size() != n) {
    throw ParseError(line_no, "matrix has " + std::to_string(counts.size()) + " rows for " +
                                  std::to_string(n) + " classes (not square)");
  }
  return ConfusionMatrix(classes, std::move(counts));
}

ConfusionMatrix load_cm_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw InputError("cannot open confusion matrix " + path.string());
  return parse_cm_csv(in);
}

std::string render_cm_csv(const ConfusionMatrix& cm) {
  std::string out = "actual\\predicted";
  for (const auto& c : cm.classes()) out += "," + c;
  out += "\n";
  for (std::size_t r = 0; r < cm.size(); ++r) {
    out += cm.classes()[r];
    for (std::size_t c = 0; c < cm.size(); ++c) out += "," + std::to_string(cm.at(r, c));
    out += "\n";
  }
  return out;
}

std::string render_report(const MetricsReport& report) {
  std::string out = fmt::format("{:<22}{:>14}{:>12}{:>16}{:>16}\n", "Class", "Precision (%)",
                                "Recall (%)", "Specificity (%)", "F-measure (%)");
  bool any_flag = false;
  for (const ClassMetrics& m : report.per_class) {
    const bool flagged = m.precision_undefined || m.recall_undefined ||
                         m.specificity_undefined || m.f_measure_undefined;
    any_flag = any_flag || flagged;
    out += fmt::format("{:<22}{:>14}{:>12}{:>16}{:>16}{}\n", m.name, pct(m.precision),
                       pct(m.recall), pct(m.specificity), pct(m.f_measure), flagged ? " *" : "");
  }
  out += fmt::format("{:<22}{:>14}{:>12}{:>16}{:>16}\n", "Average", pct(report.macro.precision),
                     pct(report.macro.recall), pct(report.macro.specificity),
                     pct(report.macro.f_measure));
  out += fmt::format("Overall Accuracy: {}% ({}/{})\n", pct(report.accuracy, 2), report.correct,
                     report.total);
  if (any_flag) out += "* a metric had a zero denominator and is reported as 0\n";
  return out;
}

std::string render_fold_summary(const FoldSummary& summary) {
  std::string out = fmt::format("{:<10}{:>14}{:>12}{:>16}{:>16}{:>14}\n", "Folds", "Precision (%)",
                                "Recall (%)", "Specificity (%)", "F-measure (%)", "Accuracy (%)");
  auto row = [&](const std::string& name, const FoldRow& r) {
    out += fmt::format("{:<10}{:>14}{:>12}{:>16}{:>16}{:>14}\n", name, pct(r.macro.precision),
                       pct(r.macro.recall), pct(r.macro.specificity), pct(r.macro.f_measure),
                       pct(r.accuracy, 2));
  };
  for (std::size_t i = 0; i < summary.folds.size(); ++i) {
    row("Fold " + std::to_string(i + 1), summary.folds[i]);
  }
  row("Average", summary.mean);
  out += "\nClass-wise averages\n";
  out += fmt::format("{:<22}{:>14}{:>12}{:>16}{:>16}\n", "Class", "Precision (%)", "Recall (%)",
                     "Specificity (%)", "F-measure (%)");
  for (const ClassMetrics& m : summary.per_class_mean) {
    out += fmt::format("{:<22}{:>14}{:>12}{:>16}{:>16}\n", m.name, pct(m.precision),
                       pct(m.recall), pct(m.specificity), pct(m.f_measure));
  }
  return out;
}

nlohmann::json report_to_json(const MetricsReport& report) {
  nlohmann::json j;
  j["classes"] = report.classes;
  j["per_class"] = nlohmann::json::array();
  for (const ClassMetrics& m : report.per_class) j["per_class"].push_back(class_json(m));
  j["macro_average"] = aggregate_json(report.macro);
  j["accuracy"] = report.accuracy;
  j["correct"] = report.correct;
  j["total"] = report.total;
  return j;
}

nlohmann::json fold_summary_to_json(const FoldSummary& summary) {
  nlohmann::json j;
  j["classes"] = summary.classes;
  j["folds"] = nlohmann::json::array();
  for (const FoldRow& r : summary.folds) {
    auto row = aggregate_json(r.macro);
    row["accuracy"] = r.accuracy;
    j["folds"].push_back(row);
  }
  auto mean = aggregate_json(summary.mean.macro);
  mean["accuracy"] = summary.mean.accuracy;
  j["average"] = mean;
  j["per_class_average"] = nlohmann::json::array();
  for (const ClassMetrics& m : summary.per_class_mean) {
    j["per_class_average"].push_back({{"class", m.name},
                                      {"precision", m.precision},
                                      {"recall", m.recall},
                                      {"specificity", m.specificity},
                                      {"f_measure", m.f_measure}});
  }
  return j;
}

}  // namespace coronet::metrics
