#include "trinity/numerics/checkpoint.hpp"

#include <unordered_map>

#include "trinity/binary_io.hpp"
#include "trinity/error.hpp"

namespace trinity::nn {

std::string encode_checkpoint(const std::vector<NamedTensor>& records) {
  io::ByteWriter w;
  w.bytes(std::string_view(kCheckpointMagic, 8));
  w.u32(kCheckpointVersion);
  w.u64(records.size());
  for (const auto& r : records) {
    if (shape_numel(r.shape) != r.values.size()) {
      throw ContractViolation("checkpoint record '" + r.name +
                              "' has inconsistent shape");
    }
    w.str(r.name);
    w.u32(static_cast<std::uint32_t>(r.shape.size()));
    for (std::size_t d : r.shape) w.u64(d);
    for (double v : r.values) w.f64(v);
  }
  return w.buffer();
}

std::vector<NamedTensor> decode_checkpoint(std::string bytes,
                                           const std::string& label) {
  io::ByteReader r(std::move(bytes), label);
  r.expect_magic(std::string_view(kCheckpointMagic, 8));
  const std::uint32_t version = r.u32();
  if (version != kCheckpointVersion) {
    r.fail("unsupported checkpoint version " + std::to_string(version));
  }
  const std::uint64_t count = r.u64();
  std::vector<NamedTensor> out;
  for (std::uint64_t i = 0; i < count; ++i) {
    NamedTensor t;
    t.name = r.str(4096);
    const std::uint32_t rank = r.u32();
    if (rank > 8) r.fail("implausible rank " + std::to_string(rank));
    std::size_t n = 1;
    for (std::uint32_t d = 0; d < rank; ++d) {
      t.shape.push_back(r.u64());
      n *= t.shape.back();
    }
    if (n > r.remaining() / 8) r.fail("truncated payload for '" + t.name + "'");
    t.values.resize(n);
    for (double& v : t.values) v = r.f64();
    out.push_back(std::move(t));
  }
  r.expect_end();
  return out;
}

void save_checkpoint(const std::filesystem::path& path,
                     const ParameterStore& store) {
  std::vector<NamedTensor> records;
  for (const auto& [name, t] : store.entries()) {
    records.push_back({name, t.shape(), {t.data().begin(), t.data().end()}});
  }
  io::write_file_atomic(path, encode_checkpoint(records));
}

void load_checkpoint(const std::filesystem::path& path, ParameterStore& store) {
  auto records = decode_checkpoint(io::read_file(path), path.string());
  std::unordered_map<std::string, const NamedTensor*> by_name;
  for (const auto& r : records) by_name[r.name] = &r;
  for (const auto& [name, t] : store.entries()) {
    auto it = by_name.find(name);
    if (it == by_name.end()) {
      throw FormatError(path.string() + ": missing parameter '" + name + "'");
    }
    if (it->second->shape != t.shape()) {
      throw FormatError(path.string() + ": parameter '" + name + "' has shape " +
                        shape_str(it->second->shape) + ", model expects " +
                        shape_str(t.shape()));
    }
    Tensor dst = t;
    std::copy(it->second->values.begin(), it->second->values.end(),
              dst.mutable_data().begin());
  }
}

}  // namespace trinity::nn
