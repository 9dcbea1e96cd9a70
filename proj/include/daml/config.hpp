#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace daml {

using KeyValues = std::vector<std::pair<std::string, std::string>>;

/// Flat `key = value` text; `#` starts a comment. Duplicate keys are errors.
KeyValues parse_key_values(std::string_view text);
KeyValues load_key_values(const std::filesystem::path& path);

/// Shortest decimal form that parses back to the same double.
std::string format_double(double v);

/// Assigns known keys to typed fields. Every key must be claimed by a
/// bind() call before finish(), otherwise finish() reports the first
/// unknown key.
class ConfigBinder {
 public:
  explicit ConfigBinder(const KeyValues& values);

  void bind(std::string_view key, double& field);
  void bind(std::string_view key, int& field);
  void bind(std::string_view key, std::size_t& field);
  void bind(std::string_view key, bool& field);
  void bind(std::string_view key, std::string& field);

  void finish() const;

 private:
  const std::string* find(std::string_view key);
  std::map<std::string, std::string, std::less<>> values_;
  std::vector<std::string> order_;
  std::map<std::string, bool, std::less<>> claimed_;
};

}  // namespace daml
