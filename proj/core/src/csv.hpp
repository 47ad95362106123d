#pragma once

// Tiny CSV reader for the simple comma-separated inputs used here: no quoted
// fields, optional '#'-prefixed comment lines, first non-comment row is the
// header.

#include <filesystem>
#include <istream>
#include <string>
#include <string_view>
#include <vector>

namespace atlas::csv {

struct Table {
    std::vector<std::string> columns;
    std::vector<std::vector<std::string>> rows;
    std::vector<std::size_t> line_numbers;
    std::vector<std::string> comments;

    // Throws ValidationError when the column is missing.
    std::size_t column(std::string_view name) const;
    bool has_column(std::string_view name) const noexcept;
};

std::vector<std::string> split_line(std::string_view line);
std::string_view trim(std::string_view s) noexcept;

Table parse(std::istream& in, const std::string& source);
Table read_file(const std::filesystem::path& path);

// Writes to a temporary sibling then renames.
void write_file(const std::filesystem::path& path, const std::string& contents);

double parse_double(std::string_view s, const std::string& context);
long long parse_int(std::string_view s, const std::string& context);
bool parse_bool(std::string_view s, const std::string& context);

// Shortest representation that round-trips a double exactly.
std::string format_double(double v);

}  // namespace atlas::csv
