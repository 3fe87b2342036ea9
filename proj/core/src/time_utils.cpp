#include "mrisvm/time_utils.hpp"

#include "mrisvm/errors.hpp"

#include <charconv>
#include <cstdio>

namespace mrisvm {

namespace {

int parse_field(std::string_view text, std::size_t pos, std::size_t len) {
    if (pos + len > text.size()) throw DataError("truncated timestamp: " + std::string(text));
    int value = 0;
    const char* first = text.data() + pos;
    auto [ptr, ec] = std::from_chars(first, first + len, value);
    if (ec != std::errc{} || ptr != first + len)
        throw DataError("malformed timestamp: " + std::string(text));
    return value;
}

void expect(std::string_view text, std::size_t pos, std::string_view allowed) {
    if (pos >= text.size() || allowed.find(text[pos]) == std::string_view::npos)
        throw DataError("malformed timestamp: " + std::string(text));
}

} // namespace

Timestamp parse_iso8601(std::string_view text) {
    using namespace std::chrono;
    // YYYY-MM-DDTHH:MM[:SS][Z]
    expect(text, 4, "-");
    expect(text, 7, "-");
    expect(text, 10, "T ");
    expect(text, 13, ":");
    const int y = parse_field(text, 0, 4);
    const int mo = parse_field(text, 5, 2);
    const int dd = parse_field(text, 8, 2);
    const int hh = parse_field(text, 11, 2);
    const int mi = parse_field(text, 14, 2);
    int ss = 0;
    std::size_t pos = 16;
    if (pos < text.size() && text[pos] == ':') {
        ss = parse_field(text, pos + 1, 2);
        pos += 3;
    }
    if (pos < text.size() && (text[pos] == 'Z' || text[pos] == 'z')) ++pos;
    if (pos != text.size()) throw DataError("unsupported timestamp suffix: " + std::string(text));

    const year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(dd)}};
    if (!ymd.ok() || hh > 23 || mi > 59 || ss > 60) throw DataError("invalid date: " + std::string(text));
    return sys_days{ymd} + hours{hh} + minutes{mi} + seconds{ss};
}

std::string format_iso8601(Timestamp ts) {
    using namespace std::chrono;
    const auto day_point = floor<days>(ts);
    const year_month_day ymd{day_point};
    const hh_mm_ss hms{ts - day_point};
    char buf[32];
    std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                  static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                  static_cast<int>(hms.hours().count()), static_cast<int>(hms.minutes().count()),
                  static_cast<int>(hms.seconds().count()));
    return buf;
}

} // namespace mrisvm
