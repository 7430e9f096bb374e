#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace shambayes::detail {

/// Shortest decimal string that parses back to the same double.
/// Non-finite values are written as "inf", "-inf", "nan".
std::string format_double(double v);

std::optional<double> parse_double(std::string_view s);
std::optional<long long> parse_int(std::string_view s);

std::string_view trim(std::string_view s);
std::vector<std::string_view> split(std::string_view s, char sep);

/// Splits into lines, dropping a trailing '\r' and blank lines. Line numbers
/// (1-based, physical) are preserved alongside the content.
struct Line {
  std::size_t number;
  std::string_view text;
};
std::vector<Line> lines(std::string_view text);

std::string read_file(const std::filesystem::path& path);
void write_file(const std::filesystem::path& path, std::string_view content);

}  // namespace shambayes::detail
