#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "trinity/numerics/layers.hpp"

namespace trinity::nn {

// Layout (little-endian):
//   "TRNYCKPT" | u32 version | u64 record count |
//   records: u32 name_len, name, u32 rank, u64 dims[rank], f64 values[]
inline constexpr char kCheckpointMagic[] = "TRNYCKPT";
inline constexpr std::uint32_t kCheckpointVersion = 1;

struct NamedTensor {
  std::string name;
  Shape shape;
  std::vector<double> values;
};

std::string encode_checkpoint(const std::vector<NamedTensor>& records);
std::vector<NamedTensor> decode_checkpoint(std::string bytes,
                                           const std::string& label);

void save_checkpoint(const std::filesystem::path& path,
                     const ParameterStore& store);
/// Copies stored values into the matching parameters of `store`. Every
/// parameter must be present with an identical shape.
void load_checkpoint(const std::filesystem::path& path, ParameterStore& store);

}  // namespace trinity::nn
