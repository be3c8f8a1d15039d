#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>

#include "irrclr/errors.hpp"

namespace irrclr {

struct ConfigValidation : ValidationError { using ValidationError::ValidationError; };

// Flat INI-style run configuration: one [section] per pipeline stage,
// key=value lines, '#' comments. Unknown section.key pairs are rejected.
// CLI flags override file values.
class RunConfig {
public:
  RunConfig() = default;

  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);

  void set(const std::string& section, const std::string& key, std::string value);
  bool has(const std::string& section, const std::string& key) const;

  std::string get_str(const std::string& section, const std::string& key,
                      const std::string& fallback) const;
  std::int64_t get_int(const std::string& section, const std::string& key,
                       std::int64_t fallback) const;
  double get_double(const std::string& section, const std::string& key, double fallback) const;
  bool get_bool(const std::string& section, const std::string& key, bool fallback) const;

  const std::map<std::string, std::string>& entries() const { return values_; }

private:
  static void check_known(const std::string& section, const std::string& key);
  std::map<std::string, std::string> values_;  // "section.key" -> value
};

}  // namespace irrclr
