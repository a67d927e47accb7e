#include "trinity/eval/protocol.hpp"

#include <algorithm>
#include <limits>

#include "trinity/error.hpp"

namespace trinity::eval {

ProtocolResult run_pseudo_protocol(const std::vector<data::PseudoContextCase>& cases,
                                   const RunScorer& scorer) {
  if (cases.empty()) throw DataError("pseudo protocol: no cases");
  ProtocolResult result;
  std::vector<double> scores;
  std::vector<int> labels;
  for (const auto& run : data::expand_runs(cases)) {
    ProtocolRun r{run.case_index, run.altered, scorer(run.case_index, run.context)};
    if (r.anomaly.empty()) throw DataError("pseudo protocol: scorer returned no frames");
    if (!result.runs.empty() && result.runs.back().case_index == r.case_index &&
        result.runs.back().anomaly.size() != r.anomaly.size()) {
      throw ContractViolation("pseudo protocol: runs of one case differ in length");
    }
    scores.insert(scores.end(), r.anomaly.begin(), r.anomaly.end());
    labels.insert(labels.end(), r.anomaly.size(), run.label);
    result.runs.push_back(std::move(r));
  }
  result.roc = roc_auc(scores, labels);
  return result;
}

PooledResult pooled_auc(const std::vector<std::vector<double>>& scores,
                        const std::vector<std::vector<int>>& labels) {
  if (scores.size() != labels.size()) throw ContractViolation("pooled_auc: video count mismatch");
  PooledResult out;
  std::vector<double> all_scores;
  std::vector<int> all_labels;
  for (std::size_t v = 0; v < scores.size(); ++v) {
    if (scores[v].size() != labels[v].size()) {
      throw ContractViolation("pooled_auc: frame count mismatch in video " + std::to_string(v));
    }
    all_scores.insert(all_scores.end(), scores[v].begin(), scores[v].end());
    all_labels.insert(all_labels.end(), labels[v].begin(), labels[v].end());
    const auto pos = std::count(labels[v].begin(), labels[v].end(), 1);
    if (pos > 0 && pos < static_cast<long>(labels[v].size())) {
      out.per_video_auc.push_back(roc_auc(scores[v], labels[v]).auc);
    } else {
      out.per_video_auc.push_back(std::numeric_limits<double>::quiet_NaN());
    }
  }
  out.roc = roc_auc(all_scores, all_labels);
  return out;
}

}  // namespace trinity::eval
