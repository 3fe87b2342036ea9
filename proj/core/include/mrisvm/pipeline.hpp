#pragma once

#include "mrisvm/config.hpp"
#include "mrisvm/icc.hpp"
#include "mrisvm/isvm.hpp"
#include "mrisvm/market_data.hpp"
#include "mrisvm/surface.hpp"
#include "mrisvm/synth.hpp"

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mrisvm {

struct SyntheticMarket {
    RegimeSchedule schedule;
    SimulatedPath path;
    EmittedMarket market;
};

SyntheticMarket simulate_market(const SyntheticMarketConfig& config, double r, double d, std::uint64_t seed,
                                Duration quote_interval = std::chrono::minutes{20});

// Independent seed for a named sub-stream (splitmix64 of seed and tag).
std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag, std::uint64_t index = 0);

// Quotes from the configured source (synthetic markets are generated in memory).
std::vector<OptionQuote> load_source_quotes(const PipelineConfig& config);

struct ClusterStageResult {
    PanelMatrix panel;
    std::optional<RegimeAssignment> assignment; // empty for k = 1
    std::map<Timestamp, int> labels;
};

// Clustering on one window: filter, panel, ICC with annealing, canonical labels.
ClusterStageResult cluster_window(std::span<const IvObservation> window_obs, const PipelineConfig& config);

struct FitStageResult {
    std::vector<SurfaceCoefficients> surfaces;
    std::map<Timestamp, double> inst_vol;
    IsvmFit unclustered;
    std::optional<IsvmFit> clustered;
    std::size_t degenerate_surfaces = 0;
};

// Surfaces and ISVM curves for one window given cluster labels (ignored for k = 1).
FitStageResult fit_window(std::span<const IvObservation> window_obs, const std::map<Timestamp, int>& labels,
                          const PipelineConfig& config);

// Residual errors per function group: "mu", "gamma", "eta2" for the
// unclustered fit, "mu_1", "gamma_2", ... for clusters (1-based).
struct WindowErrors {
    std::map<std::string, double> rmse;
    std::map<std::string, double> mae;
    bool complete = true; // false when a cluster was skipped
};

WindowErrors window_errors(const FitStageResult& fit, int k);

// Window-level artefacts: panel, labels and ISVM fits for one window of the
// configured source, computed in memory with the seeds the stages use.
struct WindowRun {
    Timestamp start{};
    std::string status = "ok"; // or "cluster_failed: ..." / "fit_failed: ..."
    ClusterStageResult cluster;
    FitStageResult fit;
    WindowErrors errors;
};
std::vector<WindowRun> run_in_memory(const PipelineConfig& config);

// Pipeline stages. Each consumes the previous stage's files in output_dir.
void stage_simulate(const PipelineConfig& config);
void stage_cluster(const PipelineConfig& config);
void stage_fit(const PipelineConfig& config);
void stage_evaluate(const PipelineConfig& config);
void run_pipeline(const PipelineConfig& config);

// Thrown by the stages with the failing stage's name attached.
class StageError : public std::runtime_error {
public:
    enum class Kind { Config, Data, Numerical };
    StageError(std::string stage, Kind kind, const std::string& what);
    const std::string& stage() const { return stage_; }
    Kind kind() const { return kind_; }

private:
    std::string stage_;
    Kind kind_;
};

} // namespace mrisvm
