#pragma once

#include <chrono>
#include <string>
#include <string_view>

namespace mrisvm {

using Timestamp = std::chrono::sys_seconds;
using Duration = std::chrono::seconds;

inline constexpr double kSecondsPerYear = 365.0 * 86400.0;

// Parses "YYYY-MM-DDTHH:MM[:SS][Z]" (also accepts a space separator). Throws DataError.
Timestamp parse_iso8601(std::string_view text);

// Formats as "YYYY-MM-DDTHH:MM:SSZ".
std::string format_iso8601(Timestamp ts);

// ACT/365 year fraction between two instants.
inline double year_fraction(Timestamp from, Timestamp to) {
    return static_cast<double>((to - from).count()) / kSecondsPerYear;
}

} // namespace mrisvm
