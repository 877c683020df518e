#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace wmdd::io {

// Writes to a sibling temporary file, then renames over `path`.
void write_atomic(const std::filesystem::path& path, std::string_view content);

std::string read_file(const std::filesystem::path& path);

// Shortest representation that parses back to the same double.
std::string format_double(double value);

bool parse_double(std::string_view text, double& out);
bool parse_int(std::string_view text, long long& out);

std::vector<std::string_view> split_fields(std::string_view line, char sep = ',');

}  // namespace wmdd::io
