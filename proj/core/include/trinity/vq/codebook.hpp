#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace trinity::vq {

/// M codewords of equal dimension, stored row-major.
class Codebook {
 public:
  Codebook() = default;
  Codebook(std::size_t size, std::size_t dim, std::vector<double> entries);

  std::size_t size() const { return size_; }
  std::size_t dim() const { return dim_; }
  std::span<const double> entry(std::size_t index) const;
  std::span<const double> entries() const { return entries_; }

  friend bool operator==(const Codebook&, const Codebook&) = default;

 private:
  std::size_t size_ = 0;
  std::size_t dim_ = 0;
  std::vector<double> entries_;
};

struct Quantized {
  std::size_t index = 0;
  double distance = 0.0;  // Euclidean
};

/// Nearest codeword; ties go to the lowest index.
Quantized quantize(std::span<const double> feature, const Codebook& codebook);

/// (word, error-word) produced by quantizing the feature and then its
/// residual against the same codebook.
struct TokenPair {
  std::size_t q_index = 0;
  std::size_t err_index = 0;

  friend bool operator==(const TokenPair&, const TokenPair&) = default;
};

TokenPair error_code(std::span<const double> feature, const Codebook& codebook);

struct PretrainOptions {
  std::size_t codebook_size = 512;
  std::size_t epochs = 20;
  double learning_rate = 1e-3;
  std::size_t batch_size = 256;
  std::uint64_t seed = 0;
};

struct PretrainResult {
  Codebook codebook;
  std::vector<double> epoch_loss;  // mean squared quantization error
  std::size_t reseeded = 0;
  // Nearest-rank 99th percentile of training-feature distances to the final
  // codebook.
  double distance_p99 = 0.0;
};

/// Fits a codebook to `features` (row-major, `dim` wide) by Adam descent on
/// the squared quantization error with straight-through assignment. Seeding
/// is D²-weighted; entries unused for a whole epoch are re-seeded from random
/// training features.
PretrainResult pretrain_codebook(std::span<const double> features,
                                 std::size_t dim, const PretrainOptions& options);

std::size_t count_distinct(std::span<const double> features, std::size_t dim);

// "TRNYCDBK" | u32 version | u64 M | u64 dim | f64 entries (little-endian)
std::string encode_codebook(const Codebook& codebook);
Codebook decode_codebook(std::string bytes, const std::string& label);
void save_codebook(const std::filesystem::path& path, const Codebook& codebook);
Codebook load_codebook(const std::filesystem::path& path);

}  // namespace trinity::vq
