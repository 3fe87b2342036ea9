#include "mrisvm/isvm.hpp"

#include "mrisvm/errors.hpp"
#include "mrisvm/eval.hpp"
#include "mrisvm/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <random>

namespace mrisvm {

const char* to_string(IsvmFunction f) {
    switch (f) {
    case IsvmFunction::Mu: return "mu";
    case IsvmFunction::Gamma: return "gamma";
    case IsvmFunction::Eta2: return "eta2";
    }
    return "?";
}

double InversionTargets::operator[](IsvmFunction f) const {
    switch (f) {
    case IsvmFunction::Mu: return mu;
    case IsvmFunction::Gamma: return gamma;
    case IsvmFunction::Eta2: return eta2;
    }
    return 0.0;
}

InversionTargets invert_coefficients(const SurfaceCoefficients& c, double v) {
    if (!(v > 0.0)) throw ConfigError("invert_coefficients: instantaneous volatility must be positive");
    InversionTargets t;
    t.gamma = 2.0 * v * c.b01;
    t.eta2 = 6.0 * v * v * v * c.b02 + 0.5 * t.gamma * t.gamma;
    t.mu = 2.0 * c.b00 - 0.5 * t.gamma * v - (2.0 * t.eta2 - t.gamma * t.gamma) / (12.0 * v);
    return t;
}

InversionTargets invert_coefficients_simplified(const SurfaceCoefficients& c, double v) {
    if (!(v > 0.0)) throw ConfigError("invert_coefficients: instantaneous volatility must be positive");
    InversionTargets t;
    t.gamma = 2.0 * v * c.b01;
    t.eta2 = 3.0 * v * v * v * c.b02 + 2.0 * v * v * c.b01 * c.b01;
    t.mu = 2.0 * c.b00 - (t.gamma * t.gamma + t.eta2) / (2.0 * v);
    return t;
}

Inversion make_inversion(InversionKind kind) {
    if (kind == InversionKind::Simplified) return invert_coefficients_simplified;
    return invert_coefficients;
}

double select_bandwidth(std::span<const double> x, double floor_fraction) {
    const std::size_t n = x.size();
    if (n < 2) throw DataError("select_bandwidth: need at least two points");
    double mean = 0.0;
    for (double v : x) mean += v;
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (double v : x) ss += (v - mean) * (v - mean);
    const double sd = std::sqrt(ss / static_cast<double>(n - 1));
    const double iqr = percentile(x, 0.75) - percentile(x, 0.25);
    double spread = sd;
    if (iqr > 0.0) spread = std::min(sd, iqr / 1.34);
    double h = 0.9 * spread * std::pow(static_cast<double>(n), -0.2);
    const auto [lo, hi] = std::minmax_element(x.begin(), x.end());
    h = std::max(h, floor_fraction * (*hi - *lo));
    return h > 0.0 ? h : 1.0;
}

double local_linear_at(std::span<const CurvePoint> points, double x, double bandwidth) {
    if (points.empty()) throw DataError("local_linear_at: no points");
    if (!(bandwidth > 0.0)) throw ConfigError("local_linear_at: bandwidth must be positive");
    double min_u = std::numeric_limits<double>::infinity();
    for (const auto& p : points) {
        const double z = (p.x - x) / bandwidth;
        min_u = std::min(min_u, z * z);
    }
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, t0 = 0.0, t1 = 0.0;
    for (const auto& p : points) {
        const double dx = p.x - x;
        const double z = dx / bandwidth;
        const double w = std::exp(-0.5 * (z * z - min_u));
        s0 += w;
        s1 += w * dx;
        s2 += w * dx * dx;
        t0 += w * p.y;
        t1 += w * dx * p.y;
    }
    const double det = s0 * s2 - s1 * s1;
    if (!(det > 1e-12 * s0 * s2) || !(s2 > 0.0)) return t0 / s0;
    return (s2 * t0 - s1 * t1) / det;
}

std::vector<double> local_regression_with_bandwidth(std::span<const CurvePoint> points, std::span<const double> grid,
                                                    double bandwidth, std::size_t min_points) {
    if (points.size() < min_points) throw DataError("insufficient cluster observations");
    std::vector<double> out;
    out.reserve(grid.size());
    for (double g : grid) out.push_back(local_linear_at(points, g, bandwidth));
    return out;
}

std::vector<double> local_regression(std::span<const CurvePoint> points, std::span<const double> grid,
                                     double bandwidth_floor_fraction, std::size_t min_points) {
    if (points.size() < min_points) throw DataError("insufficient cluster observations");
    std::vector<double> x;
    x.reserve(points.size());
    for (const auto& p : points) x.push_back(p.x);
    return local_regression_with_bandwidth(points, grid, select_bandwidth(x, bandwidth_floor_fraction), min_points);
}

std::vector<double> evaluation_grid(std::span<const double> x, std::size_t n, double q_lo, double q_hi) {
    if (x.empty()) throw DataError("evaluation_grid: no points");
    if (n < 2) throw ConfigError("evaluation_grid: need at least two grid points");
    const double lo = percentile(x, q_lo);
    const double hi = percentile(x, q_hi);
    std::vector<double> grid(n);
    for (std::size_t i = 0; i < n; ++i)
        grid[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    return grid;
}

std::vector<TargetPoint> compute_targets(std::span<const SurfaceSample> samples, const Inversion& inversion,
                                         std::size_t* skipped) {
    std::vector<TargetPoint> out;
    out.reserve(samples.size());
    std::size_t bad = 0;
    for (const auto& s : samples) {
        try {
            const SurfaceCoefficients c = fit_surface(s.obs);
            out.push_back({s.timestamp, s.v, inversion(c, s.v), s.cluster});
        } catch (const DataError&) {
            ++bad;
        }
    }
    if (skipped) *skipped = bad;
    return out;
}

void IsvmConfig::validate() const {
    if (!(tau_range.min_days >= 0.0 && tau_range.min_days <= tau_range.max_days))
        throw ConfigError("isvm: invalid maturity range");
    if (bootstrap_samples == 1 || bootstrap_samples < 0)
        throw ConfigError("isvm: bootstrap_samples must be 0 (disabled) or at least 2");
    if (grid_points < 2) throw ConfigError("isvm: grid_points must be at least 2");
    if (!(grid_q_lo >= 0.0 && grid_q_lo < grid_q_hi && grid_q_hi <= 1.0))
        throw ConfigError("isvm: grid quantiles must satisfy 0 <= lo < hi <= 1");
    if (!(band_sd >= 0.0)) throw ConfigError("isvm: band_sd must be non-negative");
    if (!(bandwidth_floor_fraction >= 0.0)) throw ConfigError("isvm: bandwidth floor must be non-negative");
    if (min_observations < 2) throw ConfigError("isvm: min_observations must be at least 2");
    if (max_redraws < 0) throw ConfigError("isvm: max_redraws must be non-negative");
}

namespace {

std::vector<CurvePoint> function_points(std::span<const TargetPoint> targets, IsvmFunction f) {
    std::vector<CurvePoint> pts;
    pts.reserve(targets.size());
    for (const auto& t : targets) pts.push_back({t.v, t.targets[f]});
    return pts;
}

struct PreparedSample {
    double v = 0.0;
    std::vector<SurfacePoint> points;
};

} // namespace

BootstrapResult bootstrap_curves(std::span<const SurfaceSample> samples,
                                 const std::array<std::vector<double>, 3>& grids,
                                 const std::array<double, 3>& bandwidths, const IsvmConfig& config) {
    const int n_boot = config.bootstrap_samples;
    BootstrapResult result;
    if (n_boot == 0) {
        for (std::size_t f = 0; f < 3; ++f) result.sd[f].assign(grids[f].size(), 0.0);
        return result;
    }

    std::vector<PreparedSample> prepared;
    prepared.reserve(samples.size());
    for (const auto& s : samples) {
        PreparedSample p{s.v, {}};
        p.points.reserve(s.obs.size());
        for (const auto& o : s.obs) p.points.push_back({o.tau, o.k, o.iv});
        prepared.push_back(std::move(p));
    }
    const Inversion inversion = make_inversion(config.inversion);

    using Curves = std::array<std::vector<double>, 3>;
    std::vector<std::optional<Curves>> replicate(static_cast<std::size_t>(n_boot));
    parallel_for(static_cast<std::size_t>(n_boot), config.threads, [&](std::size_t b) {
        std::mt19937_64 rng(config.seed + b);
        std::vector<TargetPoint> targets;
        targets.reserve(prepared.size());
        std::vector<SurfacePoint> draw;
        for (const auto& p : prepared) {
            std::uniform_int_distribution<std::size_t> pick(0, p.points.size() - 1);
            std::optional<SurfaceCoefficients> coeffs;
            for (int attempt = 0; attempt <= config.max_redraws && !coeffs; ++attempt) {
                draw.clear();
                for (std::size_t i = 0; i < p.points.size(); ++i) draw.push_back(p.points[pick(rng)]);
                try {
                    coeffs = fit_surface(std::span<const SurfacePoint>(draw));
                } catch (const DataError&) {
                }
            }
            if (!coeffs) return; // replicate skipped
            targets.push_back({{}, p.v, inversion(*coeffs, p.v), 0});
        }
        Curves curves;
        for (IsvmFunction f : kIsvmFunctions) {
            const auto idx = static_cast<std::size_t>(f);
            const auto pts = function_points(targets, f);
            curves[idx] = local_regression_with_bandwidth(pts, grids[idx], bandwidths[idx], 1);
        }
        replicate[b] = std::move(curves);
    });

    for (auto& r : replicate) {
        if (!r) {
            ++result.replicates_skipped;
            continue;
        }
        ++result.replicates_used;
        for (std::size_t f = 0; f < 3; ++f) result.curves[f].push_back(std::move((*r)[f]));
    }
    if (result.replicates_used < 2)
        throw NumericalError("bootstrap: fewer than two replicates produced valid surfaces");

    for (std::size_t f = 0; f < 3; ++f) {
        const std::size_t m = grids[f].size();
        result.sd[f].assign(m, 0.0);
        for (std::size_t g = 0; g < m; ++g) {
            double mean = 0.0;
            for (const auto& c : result.curves[f]) mean += c[g];
            mean /= static_cast<double>(result.replicates_used);
            double ss = 0.0;
            for (const auto& c : result.curves[f]) ss += (c[g] - mean) * (c[g] - mean);
            result.sd[f][g] = std::sqrt(ss / static_cast<double>(result.replicates_used - 1));
        }
    }
    return result;
}

ClusterFit fit_cluster(int cluster, std::span<const SurfaceSample> samples, const IsvmConfig& config) {
    config.validate();
    ClusterFit fit;
    fit.cluster = cluster;

    // Keep only samples with a valid surface so the bootstrap matches the point estimate.
    std::vector<SurfaceSample> usable;
    const Inversion inversion = make_inversion(config.inversion);
    for (const auto& s : samples) {
        try {
            const SurfaceCoefficients c = fit_surface(s.obs);
            fit.targets.push_back({s.timestamp, s.v, inversion(c, s.v), cluster});
            usable.push_back(s);
        } catch (const DataError&) {
            ++fit.degenerate_surfaces;
        }
    }
    if (fit.targets.size() < config.min_observations) throw DataError("insufficient cluster observations");

    std::vector<double> v;
    v.reserve(fit.targets.size());
    for (const auto& t : fit.targets) v.push_back(t.v);
    const std::vector<double> grid = evaluation_grid(v, config.grid_points, config.grid_q_lo, config.grid_q_hi);
    const double h = select_bandwidth(v, config.bandwidth_floor_fraction);

    std::array<std::vector<double>, 3> grids{grid, grid, grid};
    std::array<double, 3> bandwidths{h, h, h};
    for (IsvmFunction f : kIsvmFunctions) {
        const auto idx = static_cast<std::size_t>(f);
        const auto pts = function_points(fit.targets, f);
        CurveBand& band = fit.curves[idx];
        band.function = f;
        band.grid = grid;
        band.bandwidth = h;
        band.n_points = pts.size();
        band.mean = local_regression_with_bandwidth(pts, grid, h, config.min_observations);
        fit.fitted[idx].reserve(fit.targets.size());
        for (const auto& t : fit.targets) fit.fitted[idx].push_back(local_linear_at(pts, t.v, h));
    }

    const BootstrapResult boot = bootstrap_curves(usable, grids, bandwidths, config);
    fit.replicates_used = boot.replicates_used;
    fit.replicates_skipped = boot.replicates_skipped;
    for (std::size_t f = 0; f < 3; ++f) {
        CurveBand& band = fit.curves[f];
        band.sd = boot.sd[f];
        band.lower.resize(grid.size());
        band.upper.resize(grid.size());
        for (std::size_t g = 0; g < grid.size(); ++g) {
            band.lower[g] = band.mean[g] - config.band_sd * band.sd[g];
            band.upper[g] = band.mean[g] + config.band_sd * band.sd[g];
        }
    }
    return fit;
}

IsvmFit fit_isvm(std::span<const SurfaceSample> samples, const IsvmConfig& config) {
    config.validate();
    std::map<int, std::vector<SurfaceSample>> groups;
    for (const auto& s : samples) groups[s.cluster].push_back(s);

    IsvmFit out;
    const Inversion inversion = make_inversion(config.inversion);
    for (const auto& [cluster, group] : groups) {
        const auto usable = compute_targets(group, inversion).size();
        if (usable < config.min_observations) {
            out.skipped.push_back({cluster, usable});
            continue;
        }
        out.clusters.push_back(fit_cluster(cluster, group, config));
    }
    if (out.clusters.empty()) throw DataError("no cluster has enough observations for the ISVM fit");
    return out;
}

} // namespace mrisvm
