#include "mrisvm/market_data.hpp"

#include "mrisvm/errors.hpp"

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <cmath>
#include <tuple>

namespace mrisvm {

const char* to_string(RejectReason reason) {
    switch (reason) {
    case RejectReason::ExpiredOrExpiring: return "expiry_not_after_timestamp";
    case RejectReason::NonPositiveStrike: return "non_positive_strike";
    case RejectReason::NonPositiveUnderlying: return "non_positive_underlying";
    case RejectReason::NonPositiveVol: return "non_positive_vol";
    case RejectReason::NonFinite: return "non_finite_field";
    }
    return "unknown";
}

NormalizeResult normalize(std::span<const OptionQuote> quotes, double r, double d) {
    if (!std::isfinite(r) || !std::isfinite(d)) throw ConfigError("normalize: rates must be finite");
    if (quotes.empty()) throw DataError("normalize: no quotes");

    NormalizeResult out;
    out.observations.reserve(quotes.size());
    for (std::size_t i = 0; i < quotes.size(); ++i) {
        const OptionQuote& q = quotes[i];
        auto reject = [&](RejectReason why) { out.rejected.push_back({i, why}); };
        if (!std::isfinite(q.strike) || !std::isfinite(q.underlying_price) || !std::isfinite(q.implied_vol)) {
            reject(RejectReason::NonFinite);
        } else if (q.expiry <= q.timestamp) {
            reject(RejectReason::ExpiredOrExpiring);
        } else if (q.strike <= 0.0) {
            reject(RejectReason::NonPositiveStrike);
        } else if (q.underlying_price <= 0.0) {
            reject(RejectReason::NonPositiveUnderlying);
        } else if (q.implied_vol <= 0.0) {
            reject(RejectReason::NonPositiveVol);
        } else {
            const double tau = year_fraction(q.timestamp, q.expiry);
            const double forward = q.underlying_price * std::exp((r - d) * tau);
            out.observations.push_back({q.timestamp, q.instrument_id, tau, std::log(q.strike / forward), q.implied_vol});
        }
    }
    return out;
}

std::vector<IvObservation> filter_for_clustering(std::span<const IvObservation> obs, MoneynessBand band,
                                                 double max_tau_days) {
    if (!(band.low < band.high) || band.low <= 0.0) throw ConfigError("filter_for_clustering: need 0 < low < high");
    // bounds are widened by a roundoff tolerance so grid strikes at the edge survive
    const double k_lo = std::log(band.low) - kBoundTolerance;
    const double k_hi = std::log(band.high) + kBoundTolerance;
    const double tau_max = max_tau_days / 365.0 + kBoundTolerance;
    std::vector<IvObservation> out;
    for (const auto& o : obs) {
        if (o.k >= k_lo && o.k <= k_hi && o.tau <= tau_max) out.push_back(o);
    }
    if (out.empty()) throw DataError("no liquid short-maturity options inside the moneyness band");
    return out;
}

std::vector<IvObservation> filter_for_isvm(std::span<const IvObservation> obs, TauRangeDays range,
                                           const std::map<Timestamp, double>& inst_vol) {
    if (!(range.min_days <= range.max_days)) throw ConfigError("filter_for_isvm: min maturity above max");
    const double tau_lo = range.min_days / 365.0 - kBoundTolerance;
    const double tau_hi = range.max_days / 365.0 + kBoundTolerance;
    std::vector<IvObservation> out;
    for (const auto& o : obs) {
        const auto it = inst_vol.find(o.timestamp);
        if (it == inst_vol.end())
            throw DataError("no instantaneous volatility for timestamp " + format_iso8601(o.timestamp));
        if (o.tau < tau_lo || o.tau > tau_hi) continue;
        if (std::abs(o.k) <= it->second * std::sqrt(o.tau)) out.push_back(o);
    }
    return out;
}

double estimate_instantaneous_vol(std::span<const IvObservation> obs) {
    if (obs.empty()) throw DataError("estimate_instantaneous_vol: no observations");
    double tau_max = 0.0;
    double k_max = 0.0;
    for (const auto& o : obs) {
        tau_max = std::max(tau_max, o.tau);
        k_max = std::max(k_max, std::abs(o.k));
    }
    auto scaled = [](double x, double scale) { return scale > 0.0 ? x / scale : 0.0; };
    const IvObservation* best = nullptr;
    std::tuple<double, double, double> best_key{};
    for (const auto& o : obs) {
        const double a = scaled(o.tau, tau_max);
        const double b = scaled(std::abs(o.k), k_max);
        std::tuple<double, double, double> key{std::sqrt(a * a + b * b), o.tau, std::abs(o.k)};
        if (!best || key < best_key || (key == best_key && o.instrument_id < best->instrument_id)) {
            best = &o;
            best_key = key;
        }
    }
    return best->iv;
}

std::map<Timestamp, double> instantaneous_vol_by_timestamp(std::span<const IvObservation> obs) {
    std::map<Timestamp, std::vector<IvObservation>> by_time;
    for (const auto& o : obs) by_time[o.timestamp].push_back(o);
    std::map<Timestamp, double> out;
    for (const auto& [ts, group] : by_time) out.emplace(ts, estimate_instantaneous_vol(group));
    return out;
}

void RollingWindowSpec::validate() const {
    if (sampling_interval.count() <= 0) throw ConfigError("sampling interval must be positive");
    if (window_length.count() <= 0) throw ConfigError("window length must be positive");
    if (step.count() <= 0) throw ConfigError("window step must be positive");
    if (window_length.count() % sampling_interval.count() != 0)
        throw ConfigError("window length must be a multiple of the sampling interval");
}

std::size_t window_count(const RollingWindowSpec& spec) {
    spec.validate();
    return static_cast<std::size_t>(spec.window_length.count() / spec.sampling_interval.count());
}

std::vector<Timestamp> window_starts(Timestamp first, Timestamp last, const RollingWindowSpec& spec) {
    spec.validate();
    std::vector<Timestamp> out;
    const Duration span = spec.window_length - spec.sampling_interval; // last grid point offset
    for (Timestamp s = first; s + span <= last; s += spec.step) out.push_back(s);
    return out;
}

std::vector<IvObservation> slice_window(std::span<const IvObservation> obs, Timestamp start,
                                        const RollingWindowSpec& spec) {
    std::vector<IvObservation> out;
    const Timestamp end = start + spec.window_length;
    for (const auto& o : obs) {
        if (o.timestamp >= start && o.timestamp < end) out.push_back(o);
    }
    return out;
}

PanelMatrix build_panel(std::span<const IvObservation> obs, const RollingWindowSpec& spec,
                        double missing_threshold) {
    if (obs.empty()) throw DataError("build_panel: no observations");
    Timestamp start = obs.front().timestamp;
    for (const auto& o : obs) start = std::min(start, o.timestamp);
    return build_panel(obs, start, spec, missing_threshold);
}

PanelMatrix build_panel(std::span<const IvObservation> obs, Timestamp grid_start, const RollingWindowSpec& spec,
                        double missing_threshold) {
    if (!(missing_threshold > 0.0 && missing_threshold <= 1.0))
        throw ConfigError("missing threshold must lie in (0, 1]");
    const std::size_t n_times = window_count(spec);
    const auto interval = spec.sampling_interval.count();

    struct Acc {
        std::vector<double> sum;
        std::vector<int> count;
    };
    std::map<std::string, Acc> rows;
    for (const auto& o : obs) {
        const auto offset = (o.timestamp - grid_start).count();
        if (offset < 0 || offset % interval != 0) continue;
        const auto col = static_cast<std::size_t>(offset / interval);
        if (col >= n_times) continue;
        auto& acc = rows[o.instrument_id];
        if (acc.sum.empty()) {
            acc.sum.assign(n_times, 0.0);
            acc.count.assign(n_times, 0);
        }
        acc.sum[col] += o.iv;
        acc.count[col] += 1;
    }

    PanelMatrix panel;
    for (std::size_t t = 0; t < n_times; ++t) panel.timestamps.push_back(grid_start + spec.sampling_interval * t);

    std::vector<const Acc*> kept;
    for (const auto& [id, acc] : rows) {
        const auto observed = std::count_if(acc.count.begin(), acc.count.end(), [](int c) { return c > 0; });
        if (static_cast<double>(observed) / static_cast<double>(n_times) >= missing_threshold) {
            panel.asset_ids.push_back(id);
            kept.push_back(&acc);
        }
    }
    if (kept.size() < 2)
        throw DataError("build_panel: fewer than two instruments meet the coverage threshold");

    panel.values.resize(static_cast<Eigen::Index>(kept.size()), static_cast<Eigen::Index>(n_times));
    panel.mask.resize(panel.values.rows(), panel.values.cols());
    for (std::size_t i = 0; i < kept.size(); ++i) {
        const Acc& acc = *kept[i];
        const auto row = static_cast<Eigen::Index>(i);
        std::optional<double> last;
        for (std::size_t t = 0; t < n_times; ++t) {
            const auto col = static_cast<Eigen::Index>(t);
            const bool seen = acc.count[t] > 0;
            panel.mask(row, col) = seen;
            if (seen) last = acc.sum[t] / acc.count[t];
            panel.values(row, col) = last.value_or(std::nan(""));
        }
        // back-fill the leading gap from the first observation
        std::size_t first = 0;
        while (!acc.count[first]) ++first;
        for (std::size_t t = 0; t < first; ++t)
            panel.values(row, static_cast<Eigen::Index>(t)) = panel.values(row, static_cast<Eigen::Index>(first));
    }
    return panel;
}

namespace {

std::optional<int> month_from_abbrev(std::string_view m) {
    static constexpr std::array<const char*, 12> names{"JAN", "FEB", "MAR", "APR", "MAY", "JUN",
                                                       "JUL", "AUG", "SEP", "OCT", "NOV", "DEC"};
    for (std::size_t i = 0; i < names.size(); ++i) {
        if (m == names[i]) return static_cast<int>(i) + 1;
    }
    return std::nullopt;
}

} // namespace

std::optional<DeribitInstrument> parse_deribit_instrument(std::string_view name) {
    // UNDERLYING-DMMMYY-STRIKE-{C,P}
    std::vector<std::string_view> parts;
    std::size_t pos = 0;
    while (true) {
        const auto dash = name.find('-', pos);
        parts.push_back(name.substr(pos, dash == std::string_view::npos ? std::string_view::npos : dash - pos));
        if (dash == std::string_view::npos) break;
        pos = dash + 1;
    }
    if (parts.size() != 4 || parts[0].empty()) return std::nullopt;

    const std::string_view date = parts[1];
    if (date.size() < 6 || date.size() > 7) return std::nullopt;
    const std::size_t day_len = date.size() - 5;
    int day_value = 0;
    int year_value = 0;
    if (std::from_chars(date.data(), date.data() + day_len, day_value).ptr != date.data() + day_len) return std::nullopt;
    const auto month_value = month_from_abbrev(date.substr(day_len, 3));
    const auto yy = date.substr(day_len + 3, 2);
    if (std::from_chars(yy.data(), yy.data() + 2, year_value).ptr != yy.data() + 2) return std::nullopt;
    if (!month_value) return std::nullopt;

    using namespace std::chrono;
    const year_month_day ymd{year{2000 + year_value}, month{static_cast<unsigned>(*month_value)},
                             day{static_cast<unsigned>(day_value)}};
    if (!ymd.ok()) return std::nullopt;

    double strike = 0.0;
    const auto s = parts[2];
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), strike);
    if (ec != std::errc{} || ptr != s.data() + s.size() || strike <= 0.0) return std::nullopt;

    OptionKind kind;
    if (parts[3] == "C") kind = OptionKind::Call;
    else if (parts[3] == "P") kind = OptionKind::Put;
    else return std::nullopt;

    return DeribitInstrument{std::string(parts[0]), sys_days{ymd} + hours{8}, strike, kind};
}

} // namespace mrisvm
