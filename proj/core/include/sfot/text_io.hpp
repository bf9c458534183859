#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace sfot::text {

/// Shortest decimal text that parses back to exactly the same double.
std::string format_double(double v);

/// Strict decimal parse of the whole (trimmed) field; throws InputError.
double parse_double(std::string_view field);
long long parse_int(std::string_view field);

std::string_view trim(std::string_view s);
std::vector<std::string_view> split(std::string_view s, char sep);

/// Reads a text file into lines. A final newline does not produce an extra
/// empty line; carriage returns are stripped.
std::vector<std::string> read_lines(const std::filesystem::path& path);
std::string read_file(const std::filesystem::path& path);

/// Writes through a temporary sibling and renames it into place.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

}  // namespace sfot::text
