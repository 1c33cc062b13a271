#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace tdi::csv {

/// Splits one CSV line on commas. Quoting is not supported; fields are
/// trimmed of surrounding whitespace and a trailing '\r'.
std::vector<std::string_view> split(std::string_view line);

std::optional<double> parse_double(std::string_view field);

/// Shortest round-trip decimal representation; missing values print as "".
std::string format_double(double v);

std::string read_file(const std::filesystem::path& path);

/// Writes via a temporary file and rename so a failed run never leaves a
/// partially written output behind.
void write_file(const std::filesystem::path& path, std::string_view contents);

}  // namespace tdi::csv
