#pragma once

#include "mrisvm/time_utils.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace mrisvm {

enum class OptionKind { Call, Put };

// One raw option quote as delivered by the exchange (or by the synthetic market).
struct OptionQuote {
    Timestamp timestamp;
    std::string instrument_id;
    Timestamp expiry;
    double strike = 0.0;
    OptionKind kind = OptionKind::Call;
    double underlying_price = 0.0;
    double implied_vol = 0.0; // annualized fraction
};

// Quote translated into surface coordinates.
struct IvObservation {
    Timestamp timestamp;
    std::string instrument_id;
    double tau = 0.0; // ACT/365 years
    double k = 0.0;   // ln(strike / forward)
    double iv = 0.0;
};

enum class RejectReason {
    ExpiredOrExpiring,   // expiry <= timestamp
    NonPositiveStrike,
    NonPositiveUnderlying,
    NonPositiveVol,
    NonFinite,
};

const char* to_string(RejectReason reason);

struct RejectedQuote {
    std::size_t index; // position in the input list
    RejectReason reason;
};

struct NormalizeResult {
    std::vector<IvObservation> observations;
    std::vector<RejectedQuote> rejected;
};

// Converts quotes to (tau, k, iv). k uses the continuously compounded forward
// S * exp((r - d) * tau). Invalid quotes are reported, not thrown.
NormalizeResult normalize(std::span<const OptionQuote> quotes, double r, double d);

struct MoneynessBand {
    double low = 0.8;
    double high = 1.2;
};

// Absolute slack on log-moneyness and tau bounds in the filters.
inline constexpr double kBoundTolerance = 1e-9;

// Keeps strike/forward in [low, high] and tau <= max_tau_days / 365, both inclusive.
// Throws DataError when nothing survives.
std::vector<IvObservation> filter_for_clustering(std::span<const IvObservation> obs,
                                                 MoneynessBand band, double max_tau_days);

struct TauRangeDays {
    double min_days = 5.0;
    double max_days = 60.0;
};

// Keeps tau in [min, max] days and |k| <= v_t * sqrt(tau). Every timestamp in
// obs needs an entry in inst_vol, otherwise DataError names the timestamp.
std::vector<IvObservation> filter_for_isvm(std::span<const IvObservation> obs, TauRangeDays range,
                                           const std::map<Timestamp, double>& inst_vol);

// IV of the observation closest to (tau, k) = (0, 0) in the normalized metric
// sqrt((tau / max tau)^2 + (k / max |k|)^2). Ties: smaller tau, smaller |k|, instrument id.
double estimate_instantaneous_vol(std::span<const IvObservation> obs_at_timestamp);

// Applies estimate_instantaneous_vol to every timestamp present in obs.
std::map<Timestamp, double> instantaneous_vol_by_timestamp(std::span<const IvObservation> obs);

struct RollingWindowSpec {
    Duration window_length = std::chrono::days{5};
    Duration step = std::chrono::days{5};
    Duration sampling_interval = std::chrono::minutes{20};

    // Throws ConfigError unless lengths are positive and window_length is a
    // multiple of sampling_interval.
    void validate() const;
};

// Timestamps per window: window_length / sampling_interval.
std::size_t window_count(const RollingWindowSpec& spec);

// Window i covers [start_i, start_i + window_length) with start_i = first + i * step,
// for every window that fits inside [first, last].
std::vector<Timestamp> window_starts(Timestamp first, Timestamp last, const RollingWindowSpec& spec);

// Observations whose timestamp lies in [start, start + window_length).
std::vector<IvObservation> slice_window(std::span<const IvObservation> obs, Timestamp start,
                                        const RollingWindowSpec& spec);

// Assets x timestamps matrix of IV levels.
struct PanelMatrix {
    std::vector<std::string> asset_ids;
    std::vector<Timestamp> timestamps;
    Eigen::MatrixXd values;                                      // rows = assets
    Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> mask;    // true = observed

    std::size_t n_assets() const { return asset_ids.size(); }
    std::size_t n_times() const { return timestamps.size(); }
};

// One row per instrument on the grid start + i * sampling_interval,
// i < window_count(spec), where start is the earliest observation. Rows observed
// on fewer than missing_threshold of the grid are dropped, the rest are
// forward-filled then back-filled. Duplicate (instrument, timestamp) entries are
// averaged; observations off the grid are ignored. Throws DataError if fewer
// than two rows survive.
PanelMatrix build_panel(std::span<const IvObservation> obs, const RollingWindowSpec& spec,
                        double missing_threshold);

// Same as build_panel but with an explicit grid start.
PanelMatrix build_panel(std::span<const IvObservation> obs, Timestamp grid_start,
                        const RollingWindowSpec& spec, double missing_threshold);

// Deribit instrument names such as BTC-25MAR22-40000-C. Expiry is 08:00 UTC.
struct DeribitInstrument {
    std::string underlying;
    Timestamp expiry;
    double strike = 0.0;
    OptionKind kind = OptionKind::Call;
};

std::optional<DeribitInstrument> parse_deribit_instrument(std::string_view name);

} // namespace mrisvm
