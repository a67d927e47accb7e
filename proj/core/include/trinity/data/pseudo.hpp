#pragma once

#include <string>
#include <vector>

#include "trinity/data/dataset.hpp"
#include "trinity/data/world.hpp"

namespace trinity::data {

struct PseudoRule {
  Moment original;
  Moment altered;
  std::string intent;
};

/// Twenty alterations, counter-flow heavy: four calendar or game-day swaps,
/// twelve direction reversals and four board-only (appearance-only) changes.
std::vector<PseudoRule> default_pseudo_rules();

struct PseudoContextCase {
  std::string clip_id;
  Moment original;
  Moment altered;
  std::vector<double> original_context;
  std::vector<double> altered_context;
  std::string intent;
};

/// Throws DataError when the altered context encodes identically.
PseudoContextCase make_pseudo_case(const std::string& clip_id, const Moment& original,
                                   const Moment& altered, const std::string& intent,
                                   const model::ContextLayout& layout);

/// Cases for every record of `split` that carries an altered context.
/// Records with anomaly labels are rejected.
std::vector<PseudoContextCase> build_pseudo_cases(const Dataset& dataset,
                                                  const std::string& split = "pseudo");

/// Each case yields two runs: original context with all-normal labels and
/// altered context with all-anomalous labels.
struct EvaluationRun {
  std::size_t case_index = 0;
  bool altered = false;
  std::vector<double> context;
  int label = 0;
};

std::vector<EvaluationRun> expand_runs(const std::vector<PseudoContextCase>& cases);

}  // namespace trinity::data
