#ifndef DEEPCOUGH_EVAL_HPP
#define DEEPCOUGH_EVAL_HPP

#include <cstddef>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "deepcough/common.hpp"

namespace deepcough {

// Cough is the positive class.
struct Confusion {
  std::size_t tp = 0, fp = 0, tn = 0, fn = 0;

  std::size_t total() const { return tp + fp + tn + fn; }
  // NaN when the class is absent.
  double sensitivity() const;
  double specificity() const;
};

Confusion confusion(std::span<const Label> truth, std::span<const Label> predicted);

// Operating point for "positive iff score >= threshold". The first point is
// (0, 0) at +inf and the last is (1, 1).
struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;
};

// One vertex per distinct score, swept in descending order.
std::vector<RocPoint> roc_curve(std::span<const double> scores, std::span<const Label> labels);
// Trapezoidal area under the curve.
double auc(std::span<const RocPoint> roc);

struct EvalReport {
  std::string model;
  Confusion counts;
  double sensitivity = 0.0;
  double specificity = 0.0;
  std::vector<RocPoint> roc;
  double auc = 0.0;
};

// Confusion from the hard decisions, ROC and AUC from the scores.
EvalReport make_report(std::string model, std::span<const Label> truth, std::span<const Label> predicted,
                       std::span<const double> scores);

// model,sensitivity,specificity[,auc]
void write_table_csv(const std::filesystem::path& path, std::span<const EvalReport> rows, bool with_auc = false);
// fpr,tpr,threshold
void write_roc_csv(const std::filesystem::path& path, std::span<const RocPoint> roc);
// Aligned plain-text rendering of a result table.
std::string render_table(const std::string& title, std::span<const EvalReport> rows, bool with_auc = false);

}  // namespace deepcough

#endif  // DEEPCOUGH_EVAL_HPP
