#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "../support/auc_oracle.hpp"
#include "trinity/data/pseudo.hpp"
#include "trinity/error.hpp"
#include "trinity/eval/protocol.hpp"
#include "trinity/eval/roc.hpp"

namespace eval = trinity::eval;
namespace data = trinity::data;
using trinity::testing::pairwise_auc;

TEST(Auc, PerfectSeparationAndAllTied) {
  EXPECT_EQ(eval::roc_auc(std::vector<double>{0.1, 0.2, 0.8, 0.9},
                          std::vector<int>{0, 0, 1, 1}).auc, 1.0);
  EXPECT_EQ(eval::roc_auc(std::vector<double>(6, 0.3), std::vector<int>{0, 1, 0, 1, 1, 0}).auc,
            0.5);
}

TEST(Auc, MatchesPairwiseOracle) {
  std::mt19937_64 rng(17);
  std::uniform_int_distribution<int> coarse(0, 9);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<double> s(200);
    std::vector<int> y(200);
    for (std::size_t i = 0; i < s.size(); ++i) {
      s[i] = coarse(rng) / 10.0;  // many ties
      y[i] = (i % 3 == 0) != (coarse(rng) < 3);
    }
    const auto r = eval::roc_auc(s, y);
    EXPECT_NEAR(r.auc, pairwise_auc(s, y), 1e-12);
    EXPECT_NEAR(r.auc, eval::trapezoid_area(r.points), 1e-10);
    EXPECT_EQ(r.points.front().fpr, 0.0);
    EXPECT_EQ(r.points.front().tpr, 0.0);
    EXPECT_EQ(r.points.back().fpr, 1.0);
    EXPECT_EQ(r.points.back().tpr, 1.0);
  }
}

TEST(Auc, MonotoneInvarianceAndLabelFlip) {
  std::mt19937_64 rng(3);
  std::normal_distribution<double> g;
  std::vector<double> s(101), t(101);
  std::vector<int> y(101), flipped(101);
  for (std::size_t i = 0; i < s.size(); ++i) {
    s[i] = g(rng);
    t[i] = std::exp(3.0 * s[i]) - 7.0;
    y[i] = i % 4 == 0;
    flipped[i] = 1 - y[i];
  }
  const double a = eval::roc_auc(s, y).auc;
  EXPECT_NEAR(eval::roc_auc(t, y).auc, a, 1e-15);
  EXPECT_NEAR(a + eval::roc_auc(s, flipped).auc, 1.0, 1e-12);
}

TEST(Auc, SingleClassRejected) {
  EXPECT_THROW(eval::roc_auc(std::vector<double>{1, 2}, std::vector<int>{0, 0}),
               trinity::DataError);
  EXPECT_THROW(eval::roc_auc(std::vector<double>{1, 2}, std::vector<int>{0, 2}),
               trinity::ContractViolation);
}

namespace {

std::vector<data::PseudoContextCase> toy_cases(std::size_t n) {
  std::vector<data::PseudoContextCase> cases;
  for (std::size_t i = 0; i < n; ++i) {
    data::PseudoContextCase c;
    c.clip_id = "v" + std::to_string(i);
    c.original_context = {1.0, 0.0, double(i)};
    c.altered_context = {0.0, 1.0, double(i)};
    cases.push_back(c);
  }
  return cases;
}

}  // namespace

TEST(Protocol, ContextBlindScorerGivesExactlyOneHalf) {
  const auto cases = toy_cases(7);
  std::mt19937_64 rng(5);
  std::vector<std::vector<double>> frames(cases.size());
  std::uniform_real_distribution<double> u;
  for (auto& f : frames) {
    f.resize(30);
    for (double& x : f) x = u(rng);
  }
  const auto r = eval::run_pseudo_protocol(
      cases, [&](std::size_t i, std::span<const double>) { return frames[i]; });
  EXPECT_EQ(r.roc.auc, 0.5);
  ASSERT_EQ(r.runs.size(), 14u);
  EXPECT_EQ(r.roc.positives, r.roc.negatives);
}

TEST(Protocol, OracleScorerGivesOne) {
  const auto cases = toy_cases(4);
  const auto r = eval::run_pseudo_protocol(cases, [&](std::size_t, std::span<const double> c) {
    return std::vector<double>(5, c[1]);
  });
  EXPECT_EQ(r.roc.auc, 1.0);
}

TEST(Protocol, RunsPerCase) {
  const auto runs = data::expand_runs(toy_cases(3));
  ASSERT_EQ(runs.size(), 6u);
  int altered = 0;
  for (const auto& r : runs) altered += r.label;
  EXPECT_EQ(altered, 3);
  EXPECT_THROW(eval::run_pseudo_protocol({}, {}), trinity::DataError);
}

TEST(Pooled, PerVideoAucNanForSingleClass) {
  const auto r = eval::pooled_auc({{0.1, 0.9}, {0.5, 0.5}}, {{0, 1}, {0, 0}});
  EXPECT_EQ(r.per_video_auc[0], 1.0);
  EXPECT_TRUE(std::isnan(r.per_video_auc[1]));
  EXPECT_NEAR(r.roc.auc, pairwise_auc({0.1, 0.9, 0.5, 0.5}, {0, 1, 0, 0}), 1e-15);
}
