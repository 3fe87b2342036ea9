#include "mrisvm/quote_io.hpp"

#include "mrisvm/errors.hpp"
#include "mrisvm/table_io.hpp"

#include <json.hpp>

#include <charconv>
#include <fstream>
#include <istream>
#include <ostream>
#include <sstream>

namespace mrisvm {

namespace {

double parse_double(const std::string& s, const char* what) {
    double value = 0.0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), value);
    if (ec != std::errc{} || ptr != s.data() + s.size()) throw DataError(std::string("bad ") + what + " '" + s + "'");
    return value;
}

OptionKind parse_kind(const std::string& s) {
    if (s == "C" || s == "c" || s == "call") return OptionKind::Call;
    if (s == "P" || s == "p" || s == "put") return OptionKind::Put;
    throw DataError("bad option kind '" + s + "'");
}

} // namespace

QuoteReadResult read_quotes(std::istream& in) {
    QuoteReadResult result;
    std::string line;
    std::size_t line_no = 0;
    bool header_seen = false;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line.front() == '#') continue;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (!header_seen) {
            if (line != kQuoteHeader) throw DataError("quote file header must be: " + std::string(kQuoteHeader));
            header_seen = true;
            continue;
        }
        const auto f = split_line(line);
        try {
            if (f.size() != 7) throw DataError("expected 7 fields");
            OptionQuote q;
            q.timestamp = parse_iso8601(f[0]);
            q.instrument_id = f[1];
            if (f[2].empty() && f[3].empty() && f[4].empty()) {
                const auto parsed = parse_deribit_instrument(f[1]);
                if (!parsed) throw DataError("cannot derive contract terms from instrument name");
                q.expiry = parsed->expiry;
                q.strike = parsed->strike;
                q.kind = parsed->kind;
            } else {
                q.expiry = parse_iso8601(f[2]);
                q.strike = parse_double(f[3], "strike");
                q.kind = parse_kind(f[4]);
            }
            q.underlying_price = parse_double(f[5], "underlying_price");
            q.implied_vol = parse_double(f[6], "implied_vol");
            result.quotes.push_back(std::move(q));
        } catch (const DataError& e) {
            result.bad_lines.emplace_back(line_no, e.what());
        }
    }
    if (!header_seen) throw DataError("quote file is empty");
    return result;
}

QuoteReadResult read_quotes(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw DataError("cannot open quote file " + path.string());
    return read_quotes(in);
}

void write_quotes(std::ostream& out, const std::vector<OptionQuote>& quotes, const std::string& header_comment) {
    if (!header_comment.empty()) out << "# " << header_comment << '\n';
    out << kQuoteHeader << '\n';
    for (const auto& q : quotes) {
        out << format_iso8601(q.timestamp) << ',' << q.instrument_id << ',' << format_iso8601(q.expiry) << ','
            << format_number(q.strike, 17) << ',' << (q.kind == OptionKind::Call ? 'C' : 'P') << ','
            << format_number(q.underlying_price, 17) << ',' << format_number(q.implied_vol, 17) << '\n';
    }
}

void write_quotes(const std::filesystem::path& path, const std::vector<OptionQuote>& quotes,
                  const std::string& header_comment) {
    std::ofstream out(path);
    if (!out) throw DataError("cannot write " + path.string());
    write_quotes(out, quotes, header_comment);
}

void write_panel(const std::filesystem::path& matrix_path, const std::filesystem::path& sidecar_path,
                 const PanelMatrix& panel, const std::string& manifest_hash) {
    Table table;
    if (!manifest_hash.empty()) table.comment = "manifest_hash=" + manifest_hash;
    table.header.push_back("asset");
    for (const auto& ts : panel.timestamps) table.header.push_back(format_iso8601(ts));
    for (Eigen::Index i = 0; i < panel.values.rows(); ++i) {
        std::vector<std::string> row{panel.asset_ids[static_cast<std::size_t>(i)]};
        for (Eigen::Index t = 0; t < panel.values.cols(); ++t) row.push_back(format_number(panel.values(i, t), 17));
        table.rows.push_back(std::move(row));
    }
    write_table(matrix_path, table);

    nlohmann::json side;
    if (!manifest_hash.empty()) side["manifest_hash"] = manifest_hash;
    side["asset_ids"] = panel.asset_ids;
    std::vector<std::string> ts;
    for (const auto& t : panel.timestamps) ts.push_back(format_iso8601(t));
    side["timestamps"] = ts;
    std::vector<std::string> mask;
    for (Eigen::Index i = 0; i < panel.mask.rows(); ++i) {
        std::string bits;
        for (Eigen::Index t = 0; t < panel.mask.cols(); ++t) bits.push_back(panel.mask(i, t) ? '1' : '0');
        mask.push_back(std::move(bits));
    }
    side["mask"] = mask;
    std::ofstream out(sidecar_path);
    if (!out) throw DataError("cannot write " + sidecar_path.string());
    out << side.dump(2) << '\n';
}

PanelMatrix read_panel(const std::filesystem::path& matrix_path, const std::filesystem::path& sidecar_path) {
    const Table table = read_table(matrix_path);
    std::ifstream in(sidecar_path);
    if (!in) throw DataError("cannot read " + sidecar_path.string());
    nlohmann::json side;
    try {
        in >> side;
    } catch (const nlohmann::json::exception& e) {
        throw DataError(sidecar_path.string() + ": " + e.what());
    }
    PanelMatrix panel;
    panel.asset_ids = side.at("asset_ids").get<std::vector<std::string>>();
    for (const auto& t : side.at("timestamps")) panel.timestamps.push_back(parse_iso8601(t.get<std::string>()));
    const auto n = static_cast<Eigen::Index>(panel.asset_ids.size());
    const auto m = static_cast<Eigen::Index>(panel.timestamps.size());
    if (static_cast<Eigen::Index>(table.rows.size()) != n) throw DataError("panel matrix and sidecar disagree");
    panel.values.resize(n, m);
    panel.mask.resize(n, m);
    const auto mask = side.at("mask").get<std::vector<std::string>>();
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& row = table.rows[static_cast<std::size_t>(i)];
        if (row.size() != static_cast<std::size_t>(m) + 1) throw DataError("panel row width mismatch");
        for (Eigen::Index t = 0; t < m; ++t) {
            panel.values(i, t) = parse_double(row[static_cast<std::size_t>(t) + 1], "panel value");
            panel.mask(i, t) = mask.at(static_cast<std::size_t>(i)).at(static_cast<std::size_t>(t)) == '1';
        }
    }
    return panel;
}

} // namespace mrisvm
