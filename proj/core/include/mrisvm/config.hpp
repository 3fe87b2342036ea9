#pragma once

#include "mrisvm/icc.hpp"
#include "mrisvm/isvm.hpp"
#include "mrisvm/market_data.hpp"
#include "mrisvm/synth.hpp"

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace mrisvm {

struct RegimeModelConfig {
    std::string name;
    SabrDriftParams params;
    double jump_intensity = 0.0;
    double jump_mean = 0.0;
    double jump_sd = 0.0;
};

struct SyntheticMarketConfig {
    std::string start = "2022-01-23T00:00:00Z";
    double horizon_days = 5.0;
    double s0 = 40000.0;
    double v0 = 0.7;
    int substeps = 4; // simulation steps per quote interval
    std::vector<double> moneyness{0.80, 0.84, 0.88, 0.92, 0.96, 1.00, 1.04, 1.08, 1.12, 1.16, 1.20};
    std::vector<double> expiry_days{3, 7, 14, 30, 60};
    double iv_noise_sd = 0.002;
    PricingEngine engine = PricingEngine::Expansion;
    McPricingOptions mc{};
    std::vector<RegimeModelConfig> regimes;
    // Regime segment lengths, in quote intervals.
    std::size_t min_segment = 36;
    std::size_t max_segment = 108;
    std::string underlying = "SYN";
};

enum class SourceKind { Synthetic, File };

struct ClusteringConfig {
    IccConfig icc{};
    MoneynessBand moneyness_band{};
    double max_tau_days = 7.0;
    double missing_threshold = 0.66;
};

// Every tunable of the pipeline. Defaults are the published ones:
// moneyness 0.8-1.2, 66% coverage, 7-day clustering maturity, 5-60 day ISVM
// maturity, 25 observations per cluster, 500 bootstrap samples, lambda 0.5
// with 75% decay, 5-day windows at 20 minutes.
struct PipelineConfig {
    std::uint64_t seed = 1;
    SourceKind source = SourceKind::Synthetic;
    std::filesystem::path input_path;
    SyntheticMarketConfig synthetic{};
    double r = 0.0;
    double d = 0.0;
    RollingWindowSpec window{};
    ClusteringConfig clustering{};
    IsvmConfig isvm{};
    std::filesystem::path output_dir = "out";
    int threads = 1;

    void validate() const; // throws ConfigError
};

// Reads a JSON config. Relative input paths resolve against the config file's
// directory. Missing keys keep their defaults; unknown keys are rejected.
PipelineConfig load_config(const std::filesystem::path& path);
PipelineConfig parse_config(const std::string& json_text, const std::filesystem::path& base_dir = {});

// Canonical JSON (sorted keys, every field spelled out) used for the manifest.
std::string canonical_config_json(const PipelineConfig& config);
std::string manifest_hash(const PipelineConfig& config);

// The built-in two-regime demo market.
SyntheticMarketConfig default_two_regime_market();

} // namespace mrisvm
