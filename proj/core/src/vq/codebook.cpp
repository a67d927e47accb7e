#include "trinity/vq/codebook.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "trinity/binary_io.hpp"
#include "trinity/error.hpp"
#include "trinity/numerics/optim.hpp"
#include "trinity/numerics/tensor.hpp"

namespace trinity::vq {

Codebook::Codebook(std::size_t size, std::size_t dim, std::vector<double> entries)
    : size_(size), dim_(dim), entries_(std::move(entries)) {
  if (size_ == 0 || dim_ == 0) throw ContractViolation("Codebook: empty");
  if (entries_.size() != size_ * dim_) {
    throw ContractViolation("Codebook: " + std::to_string(entries_.size()) +
                            " values for " + std::to_string(size_) + "x" +
                            std::to_string(dim_));
  }
  for (double v : entries_) {
    if (!std::isfinite(v)) throw ContractViolation("Codebook: non-finite entry");
  }
}

std::span<const double> Codebook::entry(std::size_t index) const {
  if (index >= size_) {
    throw ContractViolation("Codebook: index " + std::to_string(index) +
                            " out of range " + std::to_string(size_));
  }
  return std::span<const double>(entries_).subspan(index * dim_, dim_);
}

Quantized quantize(std::span<const double> feature, const Codebook& codebook) {
  if (codebook.size() == 0) throw ContractViolation("quantize: empty codebook");
  if (feature.size() != codebook.dim()) {
    throw ContractViolation("quantize: feature width " +
                            std::to_string(feature.size()) + " != codebook dim " +
                            std::to_string(codebook.dim()));
  }
  for (double v : feature) {
    if (!std::isfinite(v)) throw ContractViolation("quantize: non-finite feature");
  }
  const double* e = codebook.entries().data();
  const std::size_t d = codebook.dim();
  Quantized best{0, std::numeric_limits<double>::infinity()};
  for (std::size_t n = 0; n < codebook.size(); ++n) {
    double s = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
      const double diff = feature[j] - e[n * d + j];
      s += diff * diff;
    }
    if (s < best.distance) best = {n, s};
  }
  best.distance = std::sqrt(best.distance);
  return best;
}

TokenPair error_code(std::span<const double> feature, const Codebook& codebook) {
  const Quantized q = quantize(feature, codebook);
  auto word = codebook.entry(q.index);
  std::vector<double> residual(feature.size());
  for (std::size_t j = 0; j < feature.size(); ++j) residual[j] = feature[j] - word[j];
  return {q.index, quantize(residual, codebook).index};
}

std::size_t count_distinct(std::span<const double> features, std::size_t dim) {
  if (dim == 0 || features.size() % dim) {
    throw ContractViolation("count_distinct: ragged feature buffer");
  }
  const std::size_t n = features.size() / dim;
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  auto row = [&](std::size_t i) { return features.subspan(i * dim, dim); };
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    auto ra = row(a), rb = row(b);
    return std::lexicographical_compare(ra.begin(), ra.end(), rb.begin(), rb.end());
  });
  std::size_t distinct = n ? 1 : 0;
  for (std::size_t i = 1; i < n; ++i) {
    auto ra = row(order[i - 1]), rb = row(order[i]);
    if (!std::equal(ra.begin(), ra.end(), rb.begin())) ++distinct;
  }
  return distinct;
}

PretrainResult pretrain_codebook(std::span<const double> features,
                                 std::size_t dim, const PretrainOptions& options) {
  const std::size_t m = options.codebook_size;
  if (dim == 0 || features.size() % dim) {
    throw ContractViolation("pretrain_codebook: ragged feature buffer");
  }
  if (m == 0) throw ConfigError("pretrain_codebook: codebook size must be >= 1");
  const std::size_t n = features.size() / dim;
  const std::size_t distinct = count_distinct(features, dim);
  if (distinct < m) {
    throw DataError("pretrain_codebook: " + std::to_string(distinct) +
                    " distinct features, need at least " + std::to_string(m));
  }
  std::mt19937_64 rng(options.seed);

  // D²-weighted seeding over the training features (k-means++ style).
  std::vector<double> init;
  init.reserve(m * dim);
  {
    std::vector<double> nearest(n, std::numeric_limits<double>::infinity());
    std::size_t pick_idx = std::uniform_int_distribution<std::size_t>(0, n - 1)(rng);
    for (std::size_t c = 0; c < m; ++c) {
      auto f = features.subspan(pick_idx * dim, dim);
      init.insert(init.end(), f.begin(), f.end());
      for (std::size_t i = 0; i < n; ++i) {
        double s = 0.0;
        for (std::size_t j = 0; j < dim; ++j) {
          const double d = features[i * dim + j] - f[j];
          s += d * d;
        }
        nearest[i] = std::min(nearest[i], s);
      }
      if (c + 1 == m) break;
      std::discrete_distribution<std::size_t> next(nearest.begin(), nearest.end());
      pick_idx = next(rng);
    }
  }
  std::vector<std::size_t> perm(n);
  std::iota(perm.begin(), perm.end(), std::size_t{0});

  nn::Tensor book = nn::Tensor::from_data({m, dim}, std::move(init), true);
  const std::size_t batch = std::max<std::size_t>(1, std::min(options.batch_size, n));
  const std::size_t steps_per_epoch = (n + batch - 1) / batch;
  nn::CosineSchedule schedule{options.learning_rate, options.learning_rate,
                              options.epochs * steps_per_epoch};
  nn::Adam adam({book}, schedule);

  PretrainResult result;
  std::uniform_int_distribution<std::size_t> pick(0, n - 1);
  for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
    std::shuffle(perm.begin(), perm.end(), rng);
    std::vector<bool> used(m, false);
    double loss_sum = 0.0;
    for (std::size_t s = 0; s < steps_per_epoch; ++s) {
      const std::size_t lo = s * batch;
      const std::size_t hi = std::min(n, lo + batch);
      Codebook snapshot(m, dim, {book.data().begin(), book.data().end()});
      std::vector<std::size_t> assign;
      std::vector<double> target;
      for (std::size_t k = lo; k < hi; ++k) {
        auto f = features.subspan(perm[k] * dim, dim);
        const std::size_t idx = quantize(f, snapshot).index;
        assign.push_back(idx);
        used[idx] = true;
        target.insert(target.end(), f.begin(), f.end());
      }
      const std::size_t rows = hi - lo;
      nn::Tensor chosen = nn::embedding(book, assign, {rows});
      nn::Tensor feats = nn::Tensor::from_data({rows, dim}, std::move(target));
      // Per-sample squared error, averaged over the batch.
      nn::Tensor loss = nn::scale(nn::sum(nn::square(nn::sub(chosen, feats))),
                                  1.0 / static_cast<double>(rows));
      loss_sum += loss.item() * static_cast<double>(rows);
      nn::backward(loss);
      adam.step();
    }
    result.epoch_loss.push_back(loss_sum / static_cast<double>(n));
    if (epoch + 1 < options.epochs) {
      auto data = book.mutable_data();
      for (std::size_t c = 0; c < m; ++c) {
        if (used[c]) continue;
        const std::size_t src = pick(rng);
        std::copy_n(features.begin() + static_cast<long>(src * dim), dim,
                    data.begin() + static_cast<long>(c * dim));
        ++result.reseeded;
      }
    }
  }
  result.codebook = Codebook(m, dim, {book.data().begin(), book.data().end()});
  std::vector<double> dist(n);
  for (std::size_t i = 0; i < n; ++i) {
    dist[i] = quantize(features.subspan(i * dim, dim), result.codebook).distance;
  }
  std::sort(dist.begin(), dist.end());
  const auto rank = static_cast<std::size_t>(std::ceil(0.99 * static_cast<double>(n)));
  result.distance_p99 = dist[std::max<std::size_t>(rank, 1) - 1];
  return result;
}

namespace {
constexpr std::string_view kCodebookMagic{"TRNYCDBK", 8};
constexpr std::uint32_t kCodebookVersion = 1;
}  // namespace

std::string encode_codebook(const Codebook& codebook) {
  io::ByteWriter w;
  w.bytes(kCodebookMagic);
  w.u32(kCodebookVersion);
  w.u64(codebook.size());
  w.u64(codebook.dim());
  for (double v : codebook.entries()) w.f64(v);
  return w.buffer();
}

Codebook decode_codebook(std::string bytes, const std::string& label) {
  io::ByteReader r(std::move(bytes), label);
  r.expect_magic(kCodebookMagic);
  const std::uint32_t version = r.u32();
  if (version != kCodebookVersion) {
    r.fail("unsupported codebook version " + std::to_string(version));
  }
  const std::uint64_t m = r.u64();
  const std::uint64_t d = r.u64();
  if (m == 0 || d == 0 || m > r.remaining() / 8 / d || r.remaining() != m * d * 8) {
    r.fail("payload does not hold " + std::to_string(m) + "x" + std::to_string(d) +
           " entries");
  }
  std::vector<double> entries(m * d);
  for (double& v : entries) v = r.f64();
  return Codebook(m, d, std::move(entries));
}

void save_codebook(const std::filesystem::path& path, const Codebook& codebook) {
  io::write_file_atomic(path, encode_codebook(codebook));
}

Codebook load_codebook(const std::filesystem::path& path) {
  return decode_codebook(io::read_file(path), path.string());
}

}  // namespace trinity::vq
