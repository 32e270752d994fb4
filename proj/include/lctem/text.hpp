#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace lctem {

std::string_view trim(std::string_view s);
std::vector<std::string> split(std::string_view s, char sep);

/// Strict numeric parses; throw InputError naming `what` on failure.
double parse_double(std::string_view s, std::string_view what);
long long parse_int(std::string_view s, std::string_view what);

struct KeyValue {
  std::string key;
  std::string value;
  int line = 0;
};

/// Plain-text `key = value` lines; `#` starts a comment; blank lines ignored.
std::vector<KeyValue> read_key_values(const std::filesystem::path& path);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, std::string_view text);

/// Shortest round-trip decimal for a double ("inf"/"nan" spelled out).
std::string format_real(double v);

}  // namespace lctem
