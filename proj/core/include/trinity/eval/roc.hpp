#pragma once

#include <cstddef>
#include <span>
#include <utility>
#include <vector>

namespace trinity::eval {

struct RocPoint {
  double fpr = 0.0;
  double tpr = 0.0;
  double threshold = 0.0;
};

struct RocResult {
  double auc = 0.0;
  std::vector<RocPoint> points;  // from (0, 0) to (1, 1)
  std::size_t positives = 0;
  std::size_t negatives = 0;
};

/// Tie-aware ROC-AUC: larger scores mean "more anomalous" (label 1). Ties
/// between a positive and a negative earn half credit (midrank statistic).
/// Throws DataError when labels hold a single class.
RocResult roc_auc(std::span<const double> scores, std::span<const int> labels);

/// Trapezoidal area under a curve of (fpr, tpr) points.
double trapezoid_area(std::span<const RocPoint> points);

}  // namespace trinity::eval
