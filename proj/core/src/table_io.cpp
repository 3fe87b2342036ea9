#include "mrisvm/table_io.hpp"

#include "mrisvm/errors.hpp"

#include <cstdint>
#include <cstdio>
#include <fstream>

namespace mrisvm {

std::string format_number(double value, int significant_digits) {
    if (value == 0.0) return "0"; // folds -0
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*g", significant_digits, value);
    return buf;
}

std::vector<std::string> split_line(std::string_view line, char delim) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (true) {
        const auto next = line.find(delim, pos);
        auto field = line.substr(pos, next == std::string_view::npos ? std::string_view::npos : next - pos);
        if (!field.empty() && field.back() == '\r') field.remove_suffix(1);
        out.emplace_back(field);
        if (next == std::string_view::npos) break;
        pos = next + 1;
    }
    return out;
}

std::size_t Table::column(std::string_view name) const {
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == name) return i;
    }
    throw DataError("table has no column '" + std::string(name) + "'");
}

void write_table(const std::filesystem::path& path, const Table& table) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    if (!table.comment.empty()) out << "# " << table.comment << '\n';
    auto write_row = [&](const std::vector<std::string>& row) {
        for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
        out << '\n';
    };
    write_row(table.header);
    for (const auto& row : table.rows) write_row(row);
}

Table read_table(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot read " + path.string());
    Table table;
    std::string line;
    bool have_header = false;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (line.front() == '#') {
            if (table.comment.empty()) table.comment = line.size() > 2 ? line.substr(2) : "";
            continue;
        }
        auto fields = split_line(line);
        if (!have_header) {
            table.header = std::move(fields);
            have_header = true;
        } else {
            if (fields.size() != table.header.size())
                throw DataError(path.string() + ": row width does not match header");
            table.rows.push_back(std::move(fields));
        }
    }
    if (!have_header) throw DataError(path.string() + ": missing header");
    return table;
}

std::string fnv1a_hex(std::string_view data) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : data) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

} // namespace mrisvm
