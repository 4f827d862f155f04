#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace coronet::metrics {

/// Square count matrix; rows are actual classes, columns predicted classes.
class ConfusionMatrix {
 public:
  /// All-zero matrix over `classes`.
  explicit ConfusionMatrix(std::vector<std::string> classes);
  /// Throws InputError unless `counts` is square and matches `classes`.
  ConfusionMatrix(std::vector<std::string> classes, std::vector<std::vector<std::uint64_t>> counts);

  const std::vector<std::string>& classes() const noexcept { return classes_; }
  std::size_t size() const noexcept { return classes_.size(); }
  std::uint64_t at(std::size_t actual, std::size_t predicted) const;
  void add(std::size_t actual, std::size_t predicted, std::uint64_t n = 1);

  std::uint64_t total() const;
  std::uint64_t trace() const;
  std::uint64_t row_sum(std::size_t actual) const;
  std::uint64_t column_sum(std::size_t predicted) const;

  /// Same counts with classes reordered: new class i is old class order[i].
  ConfusionMatrix permuted(const std::vector<std::size_t>& order) const;

  friend bool operator==(const ConfusionMatrix&, const ConfusionMatrix&) = default;

 private:
  std::vector<std::string> classes_;
  std::vector<std::vector<std::uint64_t>> counts_;
};

ConfusionMatrix confusion_from_predictions(std::span<const std::size_t> actual,
                                           std::span<const std::size_t> predicted,
                                           std::vector<std::string> classes);
ConfusionMatrix confusion_from_predictions(std::span<const std::string> actual,
                                           std::span<const std::string> predicted,
                                           std::vector<std::string> classes);

/// trace / total; InputError when the matrix is empty.
double overall_accuracy(const ConfusionMatrix& cm);

/// Sum of TP over sum of (TP + FP) across classes; equals accuracy for any
/// single-label confusion matrix.
double micro_precision(const ConfusionMatrix& cm);

struct ClassMetrics {
  std::string name;
  std::uint64_t tp = 0, fp = 0, fn = 0, tn = 0;
  double precision = 0.0;
  double recall = 0.0;
  double specificity = 0.0;
  double f_measure = 0.0;
  // Set when the metric's denominator was zero and it was reported as 0.
  bool precision_undefined = false;
  bool recall_undefined = false;
  bool specificity_undefined = false;
  bool f_measure_undefined = false;
};

ClassMetrics class_metrics(const ConfusionMatrix& cm, std::size_t cls);

struct Aggregate {
  double precision = 0.0;
  double recall = 0.0;
  double specificity = 0.0;
  double f_measure = 0.0;
};

/// Unweighted mean over classes.
Aggregate macro_average(std::span<const ClassMetrics> per_class);

struct MetricsReport {
  std::vector<std::string> classes;
  std::vector<ClassMetrics> per_class;
  Aggregate macro;
  double accuracy = 0.0;
  std::uint64_t correct = 0;
  std::uint64_t total = 0;
};

MetricsReport make_report(const ConfusionMatrix& cm);

struct FoldRow {
  Aggregate macro;
  double accuracy = 0.0;
};

struct FoldSummary {
  std::vector<std::string> classes;
  std::vector<FoldRow> folds;
  FoldRow mean;                            // arithmetic mean of the fold rows
  std::vector<ClassMetrics> per_class_mean;  // class-wise means across folds
};

/// InputError if the reports disagree on their class list or none is given.
FoldSummary fold_average(std::span<const MetricsReport> reports);

// CM CSV: header `actual\predicted,<class...>`, then one row per actual class.
ConfusionMatrix parse_cm_csv(std::istream& in);
ConfusionMatrix load_cm_csv(const std::filesystem::path& path);
std::string render_cm_csv(const ConfusionMatrix& cm);

/// Human-readable table; percentages at one decimal, accuracy at two.
std::string render_report(const MetricsReport& report);
std::string render_fold_summary(const FoldSummary& summary);

/// Fractions (not percentages), plus the exact integer counts behind them.
nlohmann::json report_to_json(const MetricsReport& report);
nlohmann::json fold_summary_to_json(const FoldSummary& summary);

}  // namespace coronet::metrics
