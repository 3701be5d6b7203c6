#include "closp/util/config.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "closp/error.hpp"

namespace closp {

namespace {

std::string_view trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const ConfigEntry& e, std::string_view source, const char* what) {
  T v{};
  const auto* first = e.value.data();
  const auto* last = first + e.value.size();
  auto [ptr, ec] = std::from_chars(first, last, v);
  if (ec != std::errc() || ptr != last) {
    config_fail(e, source, "'" + e.value + "' is not " + what);
  }
  return v;
}

}  // namespace

void config_fail(const ConfigEntry& e, std::string_view source, const std::string& message) {
  throw ConfigError(std::string(source) + ":" + std::to_string(e.line) + ": " + e.key + ": " +
                    message);
}

std::vector<ConfigEntry> parse_key_values(std::string_view text, std::string_view source) {
  std::vector<ConfigEntry> out;
  std::set<std::string> seen;
  std::size_t line_no = 0;
  std::size_t pos = 0;
  while (pos <= text.size()) {
    auto nl = text.find('\n', pos);
    if (nl == std::string_view::npos) nl = text.size();
    ++line_no;
    auto line = trim(text.substr(pos, nl - pos));
    pos = nl + 1;
    if (line.empty() || line.front() == '#') continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw ConfigError(std::string(source) + ":" + std::to_string(line_no) +
                        ": expected key=value, got '" + std::string(line) + "'");
    }
    ConfigEntry e{std::string(trim(line.substr(0, eq))), std::string(trim(line.substr(eq + 1))),
                  line_no};
    if (e.key.empty()) {
      throw ConfigError(std::string(source) + ":" + std::to_string(line_no) + ": empty key");
    }
    if (!seen.insert(e.key).second) config_fail(e, source, "repeated key");
    out.push_back(std::move(e));
  }
  return out;
}

std::vector<ConfigEntry> read_key_values(const std::filesystem::path& file) {
  std::ifstream is(file);
  if (!is) throw ConfigError("cannot read config " + file.string());
  std::stringstream ss;
  ss << is.rdbuf();
  return parse_key_values(ss.str(), file.string());
}

double config_real(const ConfigEntry& e, std::string_view source) {
  return parse_number<double>(e, source, "a real number");
}

std::int64_t config_int(const ConfigEntry& e, std::string_view source) {
  return parse_number<std::int64_t>(e, source, "an integer");
}

std::uint64_t config_uint(const ConfigEntry& e, std::string_view source) {
  return parse_number<std::uint64_t>(e, source, "a non-negative integer");
}

bool config_bool(const ConfigEntry& e, std::string_view source) {
  if (e.value == "true" || e.value == "1") return true;
  if (e.value == "false" || e.value == "0") return false;
  config_fail(e, source, "'" + e.value + "' is not a boolean");
}

std::string format_real(double v) {
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

}  // namespace closp
