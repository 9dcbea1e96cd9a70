#include "daml/config.hpp"

#include <charconv>
#include <fstream>
#include <sstream>

#include "daml/errors.hpp"

namespace daml {

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

template <class T>
T parse_number(std::string_view key, const std::string& text) {
  T value{};
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc() || ptr != text.data() + text.size())
    throw ConfigError("config key '" + std::string(key) + "': cannot parse '" + text + "'");
  return value;
}

}  // namespace

KeyValues parse_key_values(std::string_view text) {
  KeyValues out;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    const auto end = text.find('\n', pos);
    std::string_view line = text.substr(pos, end == std::string_view::npos ? std::string_view::npos : end - pos);
    ++line_no;
    pos = end == std::string_view::npos ? text.size() + 1 : end + 1;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    const std::string stripped = trim(line);
    if (stripped.empty()) continue;
    const auto eq = stripped.find('=');
    if (eq == std::string::npos) throw ParseError("expected key=value, got '" + stripped + "'", line_no);
    std::string key = trim(std::string_view(stripped).substr(0, eq));
    std::string value = trim(std::string_view(stripped).substr(eq + 1));
    if (key.empty()) throw ParseError("empty key", line_no);
    for (const auto& [k, v] : out)
      if (k == key) throw ParseError("duplicate key '" + key + "'", line_no);
    out.emplace_back(std::move(key), std::move(value));
  }
  return out;
}

KeyValues load_key_values(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_key_values(ss.str());
}

std::string format_double(double v) {
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

ConfigBinder::ConfigBinder(const KeyValues& values) {
  for (const auto& [k, v] : values) {
    values_.emplace(k, v);
    order_.push_back(k);
  }
}

const std::string* ConfigBinder::find(std::string_view key) {
  claimed_.emplace(std::string(key), true);
  auto it = values_.find(key);
  return it == values_.end() ? nullptr : &it->second;
}

void ConfigBinder::bind(std::string_view key, double& field) {
  if (auto* v = find(key)) field = parse_number<double>(key, *v);
}

void ConfigBinder::bind(std::string_view key, int& field) {
  if (auto* v = find(key)) field = parse_number<int>(key, *v);
}

void ConfigBinder::bind(std::string_view key, std::size_t& field) {
  if (auto* v = find(key)) field = parse_number<std::size_t>(key, *v);
}


void ConfigBinder::bind(std::string_view key, bool& field) {
  if (auto* v = find(key)) {
    if (*v == "true" || *v == "1")
      field = true;
    else if (*v == "false" || *v == "0")
      field = false;
    else
      throw ConfigError("config key '" + std::string(key) + "': expected true/false, got '" + *v + "'");
  }
}

void ConfigBinder::bind(std::string_view key, std::string& field) {
  if (auto* v = find(key)) field = *v;
}

void ConfigBinder::finish() const {
  for (const auto& k : order_)
    if (!claimed_.contains(k)) throw ConfigError("unknown config key '" + k + "'");
}

}  // namespace daml
