#pragma once

#include "mrisvm/market_data.hpp"

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace mrisvm {

// Quote file: comma separated, header
//   timestamp,instrument,expiry,strike,kind,underlying_price,implied_vol
// Timestamps are ISO-8601 UTC, kind is C or P. Lines starting with '#' are
// comments. If expiry, strike and kind are all empty they are taken from a
// Deribit-style instrument name.
inline constexpr const char* kQuoteHeader =
    "timestamp,instrument,expiry,strike,kind,underlying_price,implied_vol";

struct QuoteReadResult {
    std::vector<OptionQuote> quotes;
    std::vector<std::pair<std::size_t, std::string>> bad_lines; // line number, reason
};

QuoteReadResult read_quotes(std::istream& in);
QuoteReadResult read_quotes(const std::filesystem::path& path);

// Writes with 17 significant digits so files reload bit-exactly.
void write_quotes(std::ostream& out, const std::vector<OptionQuote>& quotes,
                  const std::string& header_comment = {});
void write_quotes(const std::filesystem::path& path, const std::vector<OptionQuote>& quotes,
                  const std::string& header_comment = {});

// Panel as a delimited matrix (assets x timestamps) plus a JSON sidecar holding
// asset ids, timestamps and the observation mask.
void write_panel(const std::filesystem::path& matrix_path, const std::filesystem::path& sidecar_path,
                 const PanelMatrix& panel, const std::string& manifest_hash = {});
PanelMatrix read_panel(const std::filesystem::path& matrix_path,
                       const std::filesystem::path& sidecar_path);

} // namespace mrisvm
