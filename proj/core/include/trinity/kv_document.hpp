#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

namespace trinity {

/// Versioned `key = value` text document. The first non-comment line is
/// "<kind> <version>"; `#` starts a comment line. Keys keep insertion order
/// when written.
class KvDocument {
 public:
  KvDocument() = default;
  KvDocument(std::string kind, std::uint32_t version)
      : kind_(std::move(kind)), version_(version) {}

  static KvDocument parse(const std::string& text, const std::string& label);
  static KvDocument load(const std::filesystem::path& path);
  std::string to_string() const;
  void save(const std::filesystem::path& path) const;

  const std::string& kind() const { return kind_; }
  std::uint32_t version() const { return version_; }
  /// Throws FormatError unless kind and version match.
  void expect(const std::string& kind, std::uint32_t version) const;

  bool has(const std::string& key) const;
  void set(const std::string& key, const std::string& value);
  void set(const std::string& key, double value);
  void set(const std::string& key, std::int64_t value);
  void set(const std::string& key, std::uint64_t value);
  void set(const std::string& key, int value) { set(key, static_cast<std::int64_t>(value)); }
  void set(const std::string& key, bool value);

  const std::string& get(const std::string& key) const;
  std::string get_or(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key) const;
  double get_double_or(const std::string& key, double fallback) const;
  std::uint64_t get_uint(const std::string& key) const;
  std::uint64_t get_uint_or(const std::string& key, std::uint64_t fallback) const;
  bool get_bool(const std::string& key) const;
  bool get_bool_or(const std::string& key, bool fallback) const;

  const std::vector<std::string>& keys() const { return order_; }

 private:
  std::string kind_;
  std::uint32_t version_ = 0;
  std::string label_;
  std::map<std::string, std::string> values_;
  std::vector<std::string> order_;
};

}  // namespace trinity
