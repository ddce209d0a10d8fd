#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>

namespace kiloland {

/// Flat key=value text; '#' starts a comment, blank lines are ignored, keys
/// carry section prefixes such as "case." or "io.".
class Config {
 public:
  static Config parse(const std::string& text, const std::string& origin = "<config>");
  static Config load(const std::filesystem::path& path);

  bool has(const std::string& key) const { return values_.count(key) != 0; }
  std::optional<std::string> get(const std::string& key) const;
  std::string get_or(const std::string& key, const std::string& fallback) const;
  double number(const std::string& key, double fallback) const;
  std::int64_t integer(const std::string& key, std::int64_t fallback) const;
  void set(const std::string& key, const std::string& value) { values_[key] = value; }

  const std::map<std::string, std::string>& values() const { return values_; }
  /// Directory of the file the config came from; relative paths resolve against it.
  const std::filesystem::path& base_dir() const { return base_dir_; }
  std::filesystem::path path(const std::string& key) const;
  /// Canonical text (sorted keys), used for hashing.
  std::string text() const;

 private:
  std::map<std::string, std::string> values_;
  std::filesystem::path base_dir_;
  std::string origin_;
};

}  // namespace kiloland
