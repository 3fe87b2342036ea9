#pragma once

#include "mrisvm/market_data.hpp"
#include "mrisvm/surface.hpp"

#include <array>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace mrisvm {

enum class IsvmFunction { Mu = 0, Gamma = 1, Eta2 = 2 };
inline constexpr std::array<IsvmFunction, 3> kIsvmFunctions{IsvmFunction::Mu, IsvmFunction::Gamma,
                                                             IsvmFunction::Eta2};
const char* to_string(IsvmFunction f);

struct InversionTargets {
    double gamma = 0.0;
    double eta2 = 0.0;
    double mu = 0.0;

    double operator[](IsvmFunction f) const;
};

// Leading-order short-maturity relations between the surface coefficients and
// the volatility dynamics dv = mu dt + gamma dW1 + eta dW2:
//   b01 = gamma / (2v), b02 = (2 eta^2 - gamma^2) / (12 v^3),
//   b00 = mu / 2 + gamma v / 4 + (2 eta^2 - gamma^2) / (24 v).
// These reproduce the lognormal SABR smile expansion exactly. Throws ConfigError for v <= 0.
InversionTargets invert_coefficients(const SurfaceCoefficients& c, double v);

// Cruder variant: gamma = 2 v b01, eta^2 = 3 v^3 b02 + 2 v^2 b01^2,
// mu = 2 b00 - (gamma^2 + eta^2) / (2v).
InversionTargets invert_coefficients_simplified(const SurfaceCoefficients& c, double v);

enum class InversionKind { LeadingOrder, Simplified };
using Inversion = std::function<InversionTargets(const SurfaceCoefficients&, double)>;
Inversion make_inversion(InversionKind kind);

struct CurvePoint {
    double x = 0.0;
    double y = 0.0;
};

// Silverman's rule 0.9 * min(sd, IQR / 1.34) * n^(-1/5), floored at
// floor_fraction * (max - min).
double select_bandwidth(std::span<const double> x, double floor_fraction = 0.05);

// Local-linear Gaussian-kernel estimate at x. Falls back to the kernel-weighted
// mean when the local design is degenerate.
double local_linear_at(std::span<const CurvePoint> points, double x, double bandwidth);

inline constexpr std::size_t kMinClusterObservations = 25;

// Local-linear curve on grid with the rule-of-thumb bandwidth. Throws DataError
// ("insufficient cluster observations") below min_points.
std::vector<double> local_regression(std::span<const CurvePoint> points, std::span<const double> grid,
                                     double bandwidth_floor_fraction = 0.05,
                                     std::size_t min_points = kMinClusterObservations);

std::vector<double> local_regression_with_bandwidth(std::span<const CurvePoint> points, std::span<const double> grid,
                                                    double bandwidth, std::size_t min_points);

// n equally spaced points between the q_lo and q_hi empirical quantiles of x.
std::vector<double> evaluation_grid(std::span<const double> x, std::size_t n = 50, double q_lo = 0.05,
                                    double q_hi = 0.95);

// All observations of one timestamp that feed a surface fit.
struct SurfaceSample {
    Timestamp timestamp{};
    double v = 0.0;  // instantaneous volatility
    int cluster = 0;
    std::vector<IvObservation> obs;
};

struct TargetPoint {
    Timestamp timestamp{};
    double v = 0.0;
    InversionTargets targets;
    int cluster = 0;
};

// Surface fit + inversion per sample; degenerate surfaces are skipped and counted.
std::vector<TargetPoint> compute_targets(std::span<const SurfaceSample> samples, const Inversion& inversion,
                                         std::size_t* skipped = nullptr);

struct IsvmConfig {
    TauRangeDays tau_range{};
    std::size_t min_observations = kMinClusterObservations;
    int bootstrap_samples = 500;
    double band_sd = 2.0;
    std::size_t grid_points = 50;
    double grid_q_lo = 0.05;
    double grid_q_hi = 0.95;
    double bandwidth_floor_fraction = 0.05;
    InversionKind inversion = InversionKind::LeadingOrder;
    std::uint64_t seed = 0;
    int max_redraws = 10;
    int threads = 1;

    void validate() const; // throws ConfigError
};

struct CurveBand {
    IsvmFunction function = IsvmFunction::Mu;
    std::vector<double> grid;
    std::vector<double> mean;
    std::vector<double> lower;
    std::vector<double> upper;
    std::vector<double> sd;
    double bandwidth = 0.0;
    std::size_t n_points = 0;
};

struct BootstrapResult {
    // replicate x grid curves for Mu, Gamma, Eta2
    std::array<std::vector<std::vector<double>>, 3> curves;
    std::array<std::vector<double>, 3> sd;
    int replicates_used = 0;
    int replicates_skipped = 0;
};

// Resamples each timestamp's observations with replacement (same count), refits
// surface -> inversion -> local regression and evaluates on the given grids.
// v per timestamp is held fixed. Replicate b uses seed + b. A degenerate
// resample is redrawn up to max_redraws times, after which the replicate is skipped.
BootstrapResult bootstrap_curves(std::span<const SurfaceSample> samples,
                                 const std::array<std::vector<double>, 3>& grids,
                                 const std::array<double, 3>& bandwidths, const IsvmConfig& config);

struct ClusterFit {
    int cluster = 0;
    std::array<CurveBand, 3> curves; // indexed by IsvmFunction
    std::vector<TargetPoint> targets;
    // Smoothed value of each function at every target's v (for residuals).
    std::array<std::vector<double>, 3> fitted;
    int replicates_used = 0;
    int replicates_skipped = 0;
    std::size_t degenerate_surfaces = 0;

    const CurveBand& curve(IsvmFunction f) const { return curves[static_cast<int>(f)]; }
};

struct SkippedCluster {
    int cluster = 0;
    std::size_t n_points = 0;
};

struct IsvmFit {
    std::vector<ClusterFit> clusters;
    std::vector<SkippedCluster> skipped;
};

// Fits one cluster: targets, curves, bootstrap bands (mean +- band_sd * sd,
// centred on the point estimate). Throws DataError below min_observations.
ClusterFit fit_cluster(int cluster, std::span<const SurfaceSample> samples, const IsvmConfig& config);

// Groups samples by cluster and fits each; clusters with fewer than
// min_observations usable targets are reported in skipped. Throws DataError
// when every cluster is skipped.
IsvmFit fit_isvm(std::span<const SurfaceSample> samples, const IsvmConfig& config);

} // namespace mrisvm
