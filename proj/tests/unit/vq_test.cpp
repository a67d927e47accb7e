#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <random>

#include "trinity/binary_io.hpp"
#include "trinity/error.hpp"
#include "trinity/vq/codebook.hpp"

namespace vq = trinity::vq;

namespace {

std::vector<double> uniform_values(std::mt19937_64& rng, std::size_t n) {
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

// Exhaustive scan kept deliberately separate from the library loop.
std::size_t brute_force(const std::vector<double>& f, const vq::Codebook& book) {
  std::vector<double> d(book.size());
  for (std::size_t n = 0; n < book.size(); ++n) {
    auto e = book.entry(n);
    double s = 0.0;
    for (std::size_t j = 0; j < f.size(); ++j) s += (f[j] - e[j]) * (f[j] - e[j]);
    d[n] = s;
  }
  return static_cast<std::size_t>(std::min_element(d.begin(), d.end()) - d.begin());
}

double norm(std::span<const double> v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

TEST(Quantize, ExactMatch) {
  std::mt19937_64 rng(1);
  vq::Codebook book(16, 25, uniform_values(rng, 16 * 25));
  auto e7 = book.entry(7);
  auto q = vq::quantize(e7, book);
  EXPECT_EQ(q.index, 7u);
  EXPECT_EQ(q.distance, 0.0);
}

TEST(Quantize, IdempotentOnCodewords) {
  std::mt19937_64 rng(2);
  vq::Codebook book(32, 25, uniform_values(rng, 32 * 25));
  for (std::size_t i = 0; i < book.size(); ++i) {
    EXPECT_EQ(vq::quantize(book.entry(i), book).index, i);
  }
}

TEST(Quantize, TieGoesToLowestIndex) {
  std::vector<double> entries(6 * 2, 10.0);
  entries[2 * 2] = 1.0;  // entry 2 = (1, 0)
  entries[2 * 2 + 1] = 0.0;
  entries[5 * 2] = -1.0;  // entry 5 = (-1, 0)
  entries[5 * 2 + 1] = 0.0;
  vq::Codebook book(6, 2, entries);
  std::vector<double> f{0.0, 0.0};
  EXPECT_EQ(vq::quantize(f, book).index, 2u);
}

TEST(Quantize, MatchesBruteForceOn10000Draws) {
  std::mt19937_64 rng(2024);
  std::uniform_int_distribution<std::size_t> msize(2, 64);
  for (int draw = 0; draw < 10000; ++draw) {
    const std::size_t m = msize(rng);
    vq::Codebook book(m, 25, uniform_values(rng, m * 25));
    auto f = uniform_values(rng, 25);
    const std::size_t q = brute_force(f, book);
    ASSERT_EQ(vq::quantize(f, book).index, q);
    auto w = book.entry(q);
    std::vector<double> r(25);
    for (std::size_t j = 0; j < 25; ++j) r[j] = f[j] - w[j];
    ASSERT_EQ(vq::error_code(f, book), (vq::TokenPair{q, brute_force(r, book)}));
  }
}

TEST(Quantize, NonFiniteRejected) {
  vq::Codebook book(2, 2, {0, 0, 1, 1});
  std::vector<double> f{std::nan(""), 0.0};
  EXPECT_THROW(vq::quantize(f, book), trinity::ContractViolation);
  std::vector<double> wrong{0.0};
  EXPECT_THROW(vq::quantize(wrong, book), trinity::ContractViolation);
}

TEST(ErrorCode, ZeroResidualPicksNearZeroWord) {
  std::mt19937_64 rng(4);
  auto entries = uniform_values(rng, 8 * 25);
  for (std::size_t j = 0; j < 25; ++j) entries[3 * 25 + j] = 1e-4;
  vq::Codebook book(8, 25, entries);
  auto pair = vq::error_code(book.entry(6), book);
  EXPECT_EQ(pair.q_index, 6u);
  EXPECT_EQ(pair.err_index, 3u);
}

TEST(ErrorCode, FarFeatureLeavesLargeResidual) {
  std::mt19937_64 rng(5);
  vq::Codebook book(32, 25, uniform_values(rng, 32 * 25));
  double min_pair = INFINITY;
  for (std::size_t a = 0; a < book.size(); ++a) {
    for (std::size_t b = a + 1; b < book.size(); ++b) {
      std::vector<double> d(25);
      for (std::size_t j = 0; j < 25; ++j) d[j] = book.entry(a)[j] - book.entry(b)[j];
      min_pair = std::min(min_pair, norm(d));
    }
  }
  // 10x outside the hull of entries in [-1, 1]^25.
  std::vector<double> f(25, 10.0);
  auto q = vq::quantize(f, book);
  std::vector<double> r(25);
  for (std::size_t j = 0; j < 25; ++j) r[j] = f[j] - book.entry(q.index)[j];
  EXPECT_GE(norm(r), 0.5 * min_pair);
  EXPECT_LE(norm(r), q.distance + norm(book.entry(q.index)) + 1e-12);
}

TEST(ErrorCode, ResidualTriangleBound) {
  std::mt19937_64 rng(6);
  vq::Codebook book(16, 25, uniform_values(rng, 16 * 25));
  for (int i = 0; i < 200; ++i) {
    auto f = uniform_values(rng, 25);
    for (double& x : f) x *= 3.0;
    auto q = vq::quantize(f, book);
    std::vector<double> r(25);
    for (std::size_t j = 0; j < 25; ++j) r[j] = f[j] - book.entry(q.index)[j];
    EXPECT_LE(norm(r), q.distance + norm(book.entry(q.index)) + 1e-12);
  }
}

TEST(Pretrain, RecoversSeparatedClusters) {
  std::mt19937_64 rng(7);
  const std::size_t m = 6, dim = 4, per = 200;
  const double spread = 0.05;
  std::vector<std::vector<double>> centers;
  for (std::size_t c = 0; c < m; ++c) {
    std::vector<double> ctr(dim, 0.0);
    ctr[c % dim] = (c < dim ? 3.0 : -3.0);
    centers.push_back(ctr);
  }
  std::normal_distribution<double> noise(0.0, spread);
  std::vector<double> feats;
  for (std::size_t c = 0; c < m; ++c) {
    for (std::size_t i = 0; i < per; ++i) {
      for (std::size_t j = 0; j < dim; ++j) feats.push_back(centers[c][j] + noise(rng));
    }
  }
  vq::PretrainOptions opt;
  opt.codebook_size = m;
  opt.epochs = 60;
  opt.batch_size = 64;
  opt.learning_rate = 0.05;
  opt.seed = 3;
  auto res = vq::pretrain_codebook(feats, dim, opt);
  for (const auto& ctr : centers) {
    auto q = vq::quantize(ctr, res.codebook);
    EXPECT_LT(q.distance, spread * std::sqrt(static_cast<double>(dim)))
        << "center not recovered";
  }
}

TEST(Pretrain, SingleWordConvergesToMean) {
  std::mt19937_64 rng(8);
  auto feats = uniform_values(rng, 300 * 3);
  std::vector<double> mean(3, 0.0);
  for (std::size_t i = 0; i < 300; ++i) {
    for (std::size_t j = 0; j < 3; ++j) mean[j] += feats[i * 3 + j] / 300.0;
  }
  vq::PretrainOptions opt;
  opt.codebook_size = 1;
  opt.epochs = 200;
  opt.batch_size = 300;
  opt.learning_rate = 0.02;
  auto res = vq::pretrain_codebook(feats, 3, opt);
  for (std::size_t j = 0; j < 3; ++j) EXPECT_NEAR(res.codebook.entry(0)[j], mean[j], 1e-3);
}

TEST(Pretrain, DefaultLearningRate) {
  EXPECT_EQ(vq::PretrainOptions{}.learning_rate, 1e-3);
  EXPECT_EQ(vq::PretrainOptions{}.codebook_size, 512u);
}

TEST(Pretrain, TooFewDistinctFeatures) {
  std::vector<double> feats{1, 1, 1, 1, 2, 2};
  vq::PretrainOptions opt;
  opt.codebook_size = 3;
  EXPECT_THROW(vq::pretrain_codebook(feats, 2, opt), trinity::DataError);
}

TEST(Pretrain, TailOfQuantizationDistances) {
  std::mt19937_64 rng(10);
  std::normal_distribution<double> g(0.0, 1.0);
  auto draw = [&](std::size_t rows) {
    std::vector<double> v(rows * 25);
    for (double& x : v) x = std::abs(g(rng));
    return v;
  };
  const auto feats = draw(2000);
  const auto held_out = draw(2000);
  vq::PretrainOptions opt;
  opt.codebook_size = 32;
  opt.epochs = 10;
  opt.learning_rate = 1e-2;
  auto res = vq::pretrain_codebook(feats, 25, opt);
  ASSERT_GT(res.distance_p99, 0.0);
  auto beyond = [&](const std::vector<double>& f) {
    std::size_t count = 0;
    for (std::size_t i = 0; i < f.size() / 25; ++i) {
      auto q = vq::quantize(std::span<const double>(f).subspan(i * 25, 25), res.codebook);
      count += q.distance > res.distance_p99;
    }
    return static_cast<double>(count) / static_cast<double>(f.size() / 25);
  };
  EXPECT_LE(beyond(feats), 0.01);
  // Fresh draws from the same distribution stay near the training tail.
  EXPECT_LT(beyond(held_out), 0.02);
  EXPECT_LE(res.epoch_loss.back(), res.epoch_loss.front());
}

TEST(CodebookFile, RoundTripAndCorruption) {
  std::mt19937_64 rng(11);
  vq::Codebook book(9, 25, uniform_values(rng, 9 * 25));
  auto path = std::filesystem::temp_directory_path() / "trinity_codebook_test.bin";
  vq::save_codebook(path, book);
  auto back = vq::load_codebook(path);
  EXPECT_EQ(back, book);
  EXPECT_EQ(vq::encode_codebook(back), trinity::io::read_file(path));

  auto bytes = vq::encode_codebook(book);
  auto bad = bytes;
  bad[0] = 'x';
  EXPECT_THROW(vq::decode_codebook(bad, "t"), trinity::FormatError);
  auto bad_version = bytes;
  bad_version[8] = 7;
  EXPECT_THROW(vq::decode_codebook(bad_version, "t"), trinity::FormatError);
  EXPECT_THROW(vq::decode_codebook(bytes.substr(0, 40), "t"), trinity::FormatError);
  std::filesystem::remove(path);
}
