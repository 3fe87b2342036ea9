#pragma once

#include "mrisvm/market_data.hpp"

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

namespace mrisvm {

using ScalarFn = std::function<double(double)>;

// dv = mu(v) dt + rho nu v dW1 + sqrt(1 - rho^2) nu v dW2, mu(v) = kappa (theta - v).
// kappa = 0 is lognormal SABR.
struct SabrDriftParams {
    double rho = 0.0;
    double nu = 0.0;
    double kappa = 0.0;
    double theta = 0.0;
};

// dS/S- = (r - d - theta_J mubar) dt + v dW1 + (e^J - 1) dN
// dv    = mu(v) dt + gamma(v) dW1 + eta(v) dW2
struct SvModelSpec {
    ScalarFn mu_fn;
    ScalarFn gamma_fn;
    ScalarFn eta_fn;
    double v0 = 0.5;
    double s0 = 100.0;
    double r = 0.0;
    double d = 0.0;
    double jump_intensity = 0.0; // per year
    double jump_mean = 0.0;      // log jump size mean
    double jump_sd = 0.0;
    std::optional<SabrDriftParams> sabr; // set by make_sabr_model
    std::string name;

    // E[e^J - 1] for normal log jumps.
    double mean_jump() const;
    void validate() const;
};

SvModelSpec make_sabr_model(const SabrDriftParams& p, double v0, double s0, double r = 0.0, double d = 0.0);
SvModelSpec make_constant_vol_model(double v0, double s0, double r = 0.0, double d = 0.0);

struct RegimeSegment {
    std::size_t start = 0; // first step governed by this segment
    int label = 0;
    SvModelSpec model;
};

struct RegimeSchedule {
    std::vector<RegimeSegment> segments;

    void validate() const; // contiguous from step 0, strictly increasing starts
    const RegimeSegment& segment_at(std::size_t step) const;
};

// Alternates models[0], models[1], ... in segments with lengths drawn uniformly
// from [min_len, max_len] until total_steps is covered.
RegimeSchedule alternating_schedule(const std::vector<SvModelSpec>& models, std::size_t total_steps,
                                    std::size_t min_len, std::size_t max_len, std::uint64_t seed);

struct SimulatedPath {
    double dt = 0.0;
    std::vector<double> s;
    std::vector<double> v;
    std::vector<int> label;  // regime of the step starting at each point
    std::size_t reflections = 0;
    std::size_t jumps = 0;

    std::size_t size() const { return s.size(); }
};

// Euler-Maruyama for v (reflected at zero), log-Euler for S with the jump
// compensator. Output has horizon / dt + 1 points.
SimulatedPath simulate_paths(const RegimeSchedule& schedule, double dt, double horizon, std::uint64_t seed);

// Hagan lognormal (beta = 1) SABR implied vol.
double sabr_implied_vol(double k, double tau, double alpha, double rho, double nu);

// Short-maturity smile of the model at state v: the functions are frozen at v
// into SABR parameters (rho = gamma / omega, nu = omega / v with
// omega^2 = gamma^2 + eta^2) and the drift shifts alpha to v + mu(v) tau / 2.
// Exact SABR expansion for SABR-like models.
double expansion_implied_vol(const SvModelSpec& model, double v, double k, double tau);

struct McPricingOptions {
    int n_paths = 10000;         // antithetic pairs count as two paths
    int steps_per_day = 6;
};

struct Contract {
    double strike = 0.0;
    double tau = 0.0;
    OptionKind kind = OptionKind::Call;
};

// Monte Carlo prices of all contracts from one set of paths started at (spot, v).
// Maturities are rounded to the simulation step.
std::vector<double> mc_prices(const SvModelSpec& model, double spot, double v,
                              const std::vector<Contract>& contracts, const McPricingOptions& options,
                              std::uint64_t seed);

enum class PricingEngine { Expansion, MonteCarlo };

struct QuoteGridSpec {
    std::vector<double> moneyness{0.80, 0.84, 0.88, 0.92, 0.96, 1.00, 1.04, 1.08, 1.12, 1.16, 1.20};
    std::vector<double> expiry_days{3, 7, 14, 30, 60};
    std::size_t steps_per_quote = 1;
    Timestamp start{};
    Duration quote_interval = std::chrono::minutes{20};
    std::string underlying = "SYN";
};

struct EmitOptions {
    PricingEngine engine = PricingEngine::Expansion;
    double iv_noise_sd = 0.0;
    McPricingOptions mc{};
    std::uint64_t seed = 0;
};

struct TruthRow {
    Timestamp timestamp{};
    int label = 0;
    double spot = 0.0;
    double v = 0.0;
};

struct EmittedMarket {
    std::vector<OptionQuote> quotes;
    std::vector<TruthRow> truth;
    std::size_t dropped = 0; // contracts whose price fell outside no-arbitrage bounds
};

// Strikes are moneyness * forward, maturities are constant, so each
// (expiry, moneyness) pair is a persistent instrument. Puts below the forward, calls at or above.
EmittedMarket emit_quotes(const SimulatedPath& path, const RegimeSchedule& schedule, const QuoteGridSpec& grid,
                          const EmitOptions& options);

// Instrument id of the constant-maturity, constant-moneyness synthetic option.
std::string synthetic_instrument_id(const std::string& underlying, double expiry_days, double moneyness,
                                    OptionKind kind);

struct GaussianRegime {
    Eigen::VectorXd mean;
    Eigen::MatrixXd covariance;
};

// Labels in contiguous blocks with uniform random lengths in [min_len, max_len],
// cycling through 0..k-1.
std::vector<int> block_labels(std::size_t n_times, int k, std::size_t min_len, std::size_t max_len,
                              std::uint64_t seed);

// Assets x time panel with column t drawn from regimes[labels[t]].
Eigen::MatrixXd gaussian_regime_panel(const std::vector<GaussianRegime>& regimes, const std::vector<int>& labels,
                                      std::uint64_t seed);

} // namespace mrisvm
