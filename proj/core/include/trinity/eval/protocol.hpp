#pragma once

#include <cstddef>
#include <functional>
#include <span>
#include <vector>

#include "trinity/data/pseudo.hpp"
#include "trinity/eval/roc.hpp"

namespace trinity::eval {

/// Per-frame anomaly scores of one case's video under the given context.
using RunScorer =
    std::function<std::vector<double>(std::size_t case_index, std::span<const double> context)>;

struct ProtocolRun {
  std::size_t case_index = 0;
  bool altered = false;
  std::vector<double> anomaly;
};

struct ProtocolResult {
  RocResult roc;  // pooled over every frame of every run
  std::vector<ProtocolRun> runs;
};

/// Scores every case twice (original context labelled 0, altered context
/// labelled 1 on every frame) and pools the frames into one ROC.
ProtocolResult run_pseudo_protocol(const std::vector<data::PseudoContextCase>& cases,
                                   const RunScorer& scorer);

/// Frames pooled over several videos. Also returns per-video AUCs where a
/// video holds both classes (NaN otherwise).
struct PooledResult {
  RocResult roc;
  std::vector<double> per_video_auc;
};
PooledResult pooled_auc(const std::vector<std::vector<double>>& scores,
                        const std::vector<std::vector<int>>& labels);

}  // namespace trinity::eval
