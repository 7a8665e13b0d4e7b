#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <string_view>

namespace vcaug {

// Flat key=value configuration. Lines starting with '#' are comments.
// Later Set() calls override earlier values, which gives the
// flags > file > defaults precedence used by the CLI.
class Config {
 public:
  Config() = default;

  static Config Load(const std::string& path);
  static Config Parse(std::string_view text);

  void Set(const std::string& key, const std::string& value) {
    values_[key] = value;
  }
  // Copies every key of `other` over this config.
  void Merge(const Config& other);

  bool Has(const std::string& key) const { return values_.count(key) != 0; }
  std::string GetString(const std::string& key, const std::string& fallback) const;
  double GetDouble(const std::string& key, double fallback) const;
  int64_t GetInt(const std::string& key, int64_t fallback) const;
  bool GetBool(const std::string& key, bool fallback) const;

  const std::map<std::string, std::string>& values() const { return values_; }

  // Canonical text form (sorted keys); stable input for hashing.
  std::string ToString() const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace vcaug
