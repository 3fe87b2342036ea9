#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

namespace mrisvm {

// Numeric output precision for every table the pipeline writes.
inline constexpr int kOutputDigits = 12;

std::string format_number(double value, int significant_digits = kOutputDigits);

std::vector<std::string> split_line(std::string_view line, char delim = ',');

// Comma separated table. The first line is an optional "# key=value" comment
// (the pipeline stores the config manifest hash there).
struct Table {
    std::vector<std::string> header;
    std::vector<std::vector<std::string>> rows;
    std::string comment;

    std::size_t column(std::string_view name) const; // throws DataError if absent
};

void write_table(const std::filesystem::path& path, const Table& table);
Table read_table(const std::filesystem::path& path);

// 64-bit FNV-1a, rendered as 16 hex digits.
std::string fnv1a_hex(std::string_view data);

} // namespace mrisvm
