#include "trinity/eval/roc.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "trinity/error.hpp"

namespace trinity::eval {

RocResult roc_auc(std::span<const double> scores, std::span<const int> labels) {
  if (scores.size() != labels.size()) {
    throw ContractViolation("roc_auc: " + std::to_string(scores.size()) + " scores for " +
                            std::to_string(labels.size()) + " labels");
  }
  RocResult r;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    if (labels[i] != 0 && labels[i] != 1) throw ContractViolation("roc_auc: labels must be 0/1");
    if (!std::isfinite(scores[i])) throw ContractViolation("roc_auc: non-finite score");
    (labels[i] ? r.positives : r.negatives)++;
  }
  if (r.positives == 0 || r.negatives == 0) {
    throw DataError("roc_auc: labels contain a single class; AUC is undefined");
  }
  const std::size_t n = scores.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Midrank sum of positives (ranks are 1-based; multiples of 0.5).
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < n;) {
    std::size_t j = i;
    std::size_t pos = 0;
    while (j < n && scores[order[j]] == scores[order[i]]) pos += labels[order[j++]];
    const double midrank = 0.5 * static_cast<double>(i + 1 + j);
    rank_sum += midrank * static_cast<double>(pos);
    i = j;
  }
  const double np = static_cast<double>(r.positives), nn = static_cast<double>(r.negatives);
  r.auc = (rank_sum - np * (np + 1.0) / 2.0) / (np * nn);

  // Curve: sweep thresholds from high to low, one point per tie group.
  r.points.push_back({0.0, 0.0, INFINITY});
  std::size_t tp = 0, fp = 0;
  for (std::size_t i = n; i > 0;) {
    std::size_t j = i;
    const double s = scores[order[i - 1]];
    while (j > 0 && scores[order[j - 1]] == s) {
      (labels[order[j - 1]] ? tp : fp)++;
      --j;
    }
    r.points.push_back({static_cast<double>(fp) / nn, static_cast<double>(tp) / np, s});
    i = j;
  }
  return r;
}

double trapezoid_area(std::span<const RocPoint> points) {
  double a = 0.0;
  for (std::size_t i = 1; i < points.size(); ++i) {
    a += (points[i].fpr - points[i - 1].fpr) * 0.5 * (points[i].tpr + points[i - 1].tpr);
  }
  return a;
}

}  // namespace trinity::eval
