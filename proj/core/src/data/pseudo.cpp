#include "trinity/data/pseudo.hpp"

#include "trinity/error.hpp"

namespace trinity::data {

std::vector<PseudoRule> default_pseudo_rules() {
  auto m = [](int hour, int day, int game) { return Moment{day, hour, 0, game}; };
  std::vector<PseudoRule> rules{
      {m(10, 4, 14), m(10, 4, 0), "game-day morning as a non-game morning"},
      {m(16, 4, 14), m(14, 4, 14), "time shifted two hours earlier"},
      {m(13, 0, 0), m(13, 0, 14), "non-game day as a game day"},
      {m(22, 5, 19), m(22, 5, 0), "game night as a non-game night"},
  };
  // Direction reversals: commute right vs left, crowd in vs out.
  for (int day : {1, 3}) {
    rules.push_back({m(8, day, 0), m(18, day, 0), "morning commute as evening commute"});
    rules.push_back({m(18, day, 0), m(8, day, 0), "evening commute as morning commute"});
    rules.push_back({m(13, day, 14), m(17, day, 14), "arriving crowd as leaving crowd"});
    rules.push_back({m(17, day, 14), m(13, day, 14), "leaving crowd as arriving crowd"});
    rules.push_back({m(18, day + 2, 19), m(22, day + 2, 19), "arriving crowd as leaving crowd"});
    rules.push_back({m(22, day + 2, 19), m(18, day + 2, 19), "leaving crowd as arriving crowd"});
  }
  // Same motion, different scenery.
  rules.push_back({m(10, 2, 14), m(10, 2, 0), "boards up on a non-game morning"});
  rules.push_back({m(11, 6, 0), m(11, 6, 14), "no boards on a game morning"});
  rules.push_back({m(9, 0, 14), m(9, 0, 0), "boards up on a non-game morning"});
  rules.push_back({m(11, 5, 0), m(11, 5, 14), "no boards on a game morning"});
  return rules;
}

PseudoContextCase make_pseudo_case(const std::string& clip_id, const Moment& original,
                                   const Moment& altered, const std::string& intent,
                                   const model::ContextLayout& layout) {
  PseudoContextCase c;
  c.clip_id = clip_id;
  c.original = original;
  c.altered = altered;
  c.original_context = encode_context(original, layout);
  c.altered_context = encode_context(altered, layout);
  c.intent = intent;
  if (c.original_context == c.altered_context) {
    throw DataError("pseudo case '" + clip_id + "': altered context " + altered.to_string() +
                    " encodes identically to the original");
  }
  return c;
}

std::vector<PseudoContextCase> build_pseudo_cases(const Dataset& dataset,
                                                  const std::string& split) {
  std::vector<PseudoContextCase> cases;
  for (const ClipRecord* r : dataset.split(split)) {
    if (r->altered_context.empty()) continue;
    for (int l : r->labels) {
      if (l != 0) throw DataError("pseudo case '" + r->id + "' is not a normal video");
    }
    PseudoContextCase c;
    c.clip_id = r->id;
    if (r->moment) c.original = *r->moment;
    if (r->altered_moment) c.altered = *r->altered_moment;
    c.original_context = r->context;
    c.altered_context = r->altered_context;
    c.intent = r->intent;
    if (c.original_context == c.altered_context) {
      throw DataError("pseudo case '" + r->id + "': altered context equals the original");
    }
    cases.push_back(std::move(c));
  }
  if (cases.empty()) throw DataError("split '" + split + "' holds no pseudo-context cases");
  return cases;
}

std::vector<EvaluationRun> expand_runs(const std::vector<PseudoContextCase>& cases) {
  std::vector<EvaluationRun> runs;
  for (std::size_t i = 0; i < cases.size(); ++i) {
    runs.push_back({i, false, cases[i].original_context, 0});
    runs.push_back({i, true, cases[i].altered_context, 1});
  }
  return runs;
}

}  // namespace trinity::data
