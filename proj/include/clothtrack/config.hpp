#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "clothtrack/core.hpp"

namespace ct {

/// Flat key/value store parsed from INI-style text. Keys are
/// "section.key". Unknown keys are rejected against a registry so typos in
/// scene files or --override flags fail loudly.
class Config {
 public:
  static Config parse_file(const std::string& path);
  static Config parse_string(const std::string& text, const std::string& origin = "<string>");

  void apply_override(const std::string& assignment);  // "section.key=value"

  bool has(const std::string& key) const { return values_.count(key) > 0; }

  std::string get_string(const std::string& key, const std::string& def) const;
  std::string require_string(const std::string& key) const;
  double get_double(const std::string& key, double def) const;
  int get_int(const std::string& key, int def) const;
  bool get_bool(const std::string& key, bool def) const;
  Vec3 get_vec3(const std::string& key, const Vec3& def) const;

  /// Validates every present key against the known-key registry.
  /// Throws InputError listing the offenders.
  void validate_keys(const std::set<std::string>& known) const;

  const std::map<std::string, std::string>& values() const { return values_; }

  /// Serialized resolved form, one "key = value" per line, sorted.
  std::string dump() const;

 private:
  std::map<std::string, std::string> values_;
};

/// Registry of every config key the engine understands.
const std::set<std::string>& known_config_keys();

}  // namespace ct
