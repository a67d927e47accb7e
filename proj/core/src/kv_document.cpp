#include "trinity/kv_document.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include "trinity/binary_io.hpp"
#include "trinity/error.hpp"

namespace trinity {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

}  // namespace

KvDocument KvDocument::parse(const std::string& text, const std::string& label) {
  KvDocument doc;
  doc.label_ = label;
  std::istringstream in(text);
  std::string line;
  std::size_t lineno = 0;
  bool header = false;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const std::string where = label + ":" + std::to_string(lineno);
    if (!header) {
      const auto space = t.find(' ');
      if (space == std::string::npos) {
        throw FormatError(where + ": expected '<kind> <version>' header");
      }
      doc.kind_ = t.substr(0, space);
      const std::string v = trim(t.substr(space + 1));
      std::uint32_t version = 0;
      auto [p, ec] = std::from_chars(v.data(), v.data() + v.size(), version);
      if (ec != std::errc() || p != v.data() + v.size()) {
        throw FormatError(where + ": bad version '" + v + "'");
      }
      doc.version_ = version;
      header = true;
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos) throw FormatError(where + ": expected 'key = value'");
    const std::string key = trim(t.substr(0, eq));
    if (key.empty()) throw FormatError(where + ": empty key");
    if (doc.has(key)) throw FormatError(where + ": duplicate key '" + key + "'");
    doc.set(key, trim(t.substr(eq + 1)));
  }
  if (!header) throw FormatError(label + ": missing header line");
  return doc;
}

KvDocument KvDocument::load(const std::filesystem::path& path) {
  return parse(io::read_file(path), path.string());
}

std::string KvDocument::to_string() const {
  std::string out = kind_ + " " + std::to_string(version_) + "\n";
  for (const auto& k : order_) out += k + " = " + values_.at(k) + "\n";
  return out;
}

void KvDocument::save(const std::filesystem::path& path) const {
  io::write_file_atomic(path, to_string());
}

void KvDocument::expect(const std::string& kind, std::uint32_t version) const {
  if (kind_ != kind) {
    throw FormatError(label_ + ": expected a '" + kind + "' document, found '" + kind_ + "'");
  }
  if (version_ != version) {
    throw FormatError(label_ + ": unsupported " + kind + " version " +
                      std::to_string(version_) + " (expected " +
                      std::to_string(version) + ")");
  }
}

bool KvDocument::has(const std::string& key) const { return values_.count(key) > 0; }

void KvDocument::set(const std::string& key, const std::string& value) {
  if (value.find('\n') != std::string::npos) {
    throw ContractViolation("KvDocument: value for '" + key + "' contains a newline");
  }
  if (!has(key)) order_.push_back(key);
  values_[key] = value;
}

void KvDocument::set(const std::string& key, double value) {
  char buf[64];
  auto [p, ec] = std::to_chars(buf, buf + sizeof buf, value);
  set(key, std::string(buf, p));
}

void KvDocument::set(const std::string& key, std::int64_t value) {
  set(key, std::to_string(value));
}

void KvDocument::set(const std::string& key, std::uint64_t value) {
  set(key, std::to_string(value));
}

void KvDocument::set(const std::string& key, bool value) {
  set(key, std::string(value ? "true" : "false"));
}

const std::string& KvDocument::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError(label_ + ": missing key '" + key + "'");
  return it->second;
}

std::string KvDocument::get_or(const std::string& key, const std::string& fallback) const {
  return has(key) ? get(key) : fallback;
}

double KvDocument::get_double(const std::string& key) const {
  const std::string& s = get(key);
  double v = 0.0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size() || !std::isfinite(v)) {
    throw ConfigError(label_ + ": '" + key + "' is not a number: '" + s + "'");
  }
  return v;
}

double KvDocument::get_double_or(const std::string& key, double fallback) const {
  return has(key) ? get_double(key) : fallback;
}

std::uint64_t KvDocument::get_uint(const std::string& key) const {
  const std::string& s = get(key);
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) {
    throw ConfigError(label_ + ": '" + key + "' is not a non-negative integer: '" + s + "'");
  }
  return v;
}

std::uint64_t KvDocument::get_uint_or(const std::string& key, std::uint64_t fallback) const {
  return has(key) ? get_uint(key) : fallback;
}

bool KvDocument::get_bool(const std::string& key) const {
  const std::string& s = get(key);
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ConfigError(label_ + ": '" + key + "' is not a boolean: '" + s + "'");
}

bool KvDocument::get_bool_or(const std::string& key, bool fallback) const {
  return has(key) ? get_bool(key) : fallback;
}

}  // namespace trinity
