#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace closp {

struct ConfigEntry {
  std::string key;
  std::string value;
  std::size_t line = 0;
};

// Flat key=value text. Blank lines and lines starting with '#' are skipped;
// anything else without '=' or with a repeated key raises ConfigError
// naming `source` and the line.
std::vector<ConfigEntry> parse_key_values(std::string_view text, std::string_view source);
std::vector<ConfigEntry> read_key_values(const std::filesystem::path& file);

// Typed field parsers; throw ConfigError quoting the entry.
double config_real(const ConfigEntry& e, std::string_view source);
std::int64_t config_int(const ConfigEntry& e, std::string_view source);
std::uint64_t config_uint(const ConfigEntry& e, std::string_view source);
bool config_bool(const ConfigEntry& e, std::string_view source);

[[noreturn]] void config_fail(const ConfigEntry& e, std::string_view source,
                              const std::string& message);

// Shortest decimal that parses back to the same double.
std::string format_real(double v);

}  // namespace closp
