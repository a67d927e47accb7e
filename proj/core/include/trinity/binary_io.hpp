#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "trinity/error.hpp"

namespace trinity::io {

static_assert(std::endian::native == std::endian::little ||
                  std::endian::native == std::endian::big,
              "mixed-endian hosts are not supported");

/// Little-endian byte sink.
class ByteWriter {
 public:
  void bytes(std::string_view raw) { buf_.append(raw); }
  void u32(std::uint32_t v) { put(v); }
  void u64(std::uint64_t v) { put(v); }
  void f32(float v) { put(std::bit_cast<std::uint32_t>(v)); }
  void f64(double v) { put(std::bit_cast<std::uint64_t>(v)); }
  void str(std::string_view s) {
    u32(static_cast<std::uint32_t>(s.size()));
    bytes(s);
  }
  const std::string& buffer() const { return buf_; }

 private:
  template <typename U>
  void put(U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      buf_.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
    }
  }
  std::string buf_;
};

/// Little-endian byte source with offset-aware truncation errors.
class ByteReader {
 public:
  ByteReader(std::string data, std::string label)
      : data_(std::move(data)), label_(std::move(label)) {}

  std::string_view bytes(std::size_t n) {
    need(n);
    std::string_view out(data_.data() + pos_, n);
    pos_ += n;
    return out;
  }
  std::uint32_t u32() { return get<std::uint32_t>(); }
  std::uint64_t u64() { return get<std::uint64_t>(); }
  float f32() { return std::bit_cast<float>(u32()); }
  double f64() { return std::bit_cast<double>(u64()); }
  std::string str(std::size_t max_len = 1 << 20) {
    const std::uint32_t n = u32();
    if (n > max_len) fail("string length " + std::to_string(n) + " too large");
    return std::string(bytes(n));
  }
  void expect_magic(std::string_view magic) {
    const std::size_t at = pos_;
    if (remaining() < magic.size() || bytes(magic.size()) != magic) {
      throw FormatError(label_ + ": bad magic at byte offset " +
                        std::to_string(at) + " (expected '" +
                        std::string(magic) + "')");
    }
  }
  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }
  void expect_end() {
    if (remaining() != 0) {
      fail(std::to_string(remaining()) + " trailing bytes");
    }
  }
  [[noreturn]] void fail(const std::string& what) const {
    throw FormatError(label_ + ": " + what + " at byte offset " +
                      std::to_string(pos_));
  }

 private:
  void need(std::size_t n) const {
    if (remaining() < n) {
      fail("truncated payload (need " + std::to_string(n) + " bytes, have " +
           std::to_string(remaining()) + ")");
    }
  }
  template <typename U>
  U get() {
    auto raw = bytes(sizeof(U));
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i) {
      v |= static_cast<U>(static_cast<unsigned char>(raw[i])) << (8 * i);
    }
    return v;
  }

  std::string data_;
  std::string label_;
  std::size_t pos_ = 0;
};

std::string read_file(const std::filesystem::path& path);
/// Writes to a temporary sibling, then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::string_view data);

}  // namespace trinity::io
