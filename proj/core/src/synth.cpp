#include "mrisvm/synth.hpp"

#include "mrisvm/black_scholes.hpp"
#include "mrisvm/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <random>

namespace mrisvm {

double SvModelSpec::mean_jump() const { return std::exp(jump_mean + 0.5 * jump_sd * jump_sd) - 1.0; }

void SvModelSpec::validate() const {
    if (!mu_fn || !gamma_fn || !eta_fn) throw ConfigError("model '" + name + "': mu, gamma and eta must be set");
    if (!(v0 > 0.0)) throw ConfigError("model '" + name + "': v0 must be positive");
    if (!(s0 > 0.0)) throw ConfigError("model '" + name + "': s0 must be positive");
    if (!(jump_intensity >= 0.0)) throw ConfigError("model '" + name + "': jump intensity must be non-negative");
    if (!(jump_sd >= 0.0)) throw ConfigError("model '" + name + "': jump sd must be non-negative");
}

SvModelSpec make_sabr_model(const SabrDriftParams& p, double v0, double s0, double r, double d) {
    if (!(p.rho > -1.0 && p.rho < 1.0)) throw ConfigError("SABR correlation must lie in (-1, 1)");
    if (!(p.nu >= 0.0)) throw ConfigError("SABR vol-of-vol must be non-negative");
    SvModelSpec m;
    m.mu_fn = [p](double v) { return p.kappa * (p.theta - v); };
    m.gamma_fn = [p](double v) { return p.rho * p.nu * v; };
    const double eta_scale = std::sqrt(1.0 - p.rho * p.rho) * p.nu;
    m.eta_fn = [eta_scale](double v) { return eta_scale * v; };
    m.v0 = v0;
    m.s0 = s0;
    m.r = r;
    m.d = d;
    m.sabr = p;
    return m;
}

SvModelSpec make_constant_vol_model(double v0, double s0, double r, double d) {
    return make_sabr_model(SabrDriftParams{0.0, 0.0, 0.0, v0}, v0, s0, r, d);
}

void RegimeSchedule::validate() const {
    if (segments.empty()) throw ConfigError("regime schedule is empty");
    if (segments.front().start != 0) throw ConfigError("regime schedule must start at step 0");
    for (std::size_t i = 1; i < segments.size(); ++i) {
        if (segments[i].start <= segments[i - 1].start)
            throw ConfigError("regime segments must have strictly increasing starts");
    }
    for (const auto& s : segments) s.model.validate();
}

const RegimeSegment& RegimeSchedule::segment_at(std::size_t step) const {
    auto it = std::upper_bound(segments.begin(), segments.end(), step,
                               [](std::size_t s, const RegimeSegment& seg) { return s < seg.start; });
    return *std::prev(it);
}

RegimeSchedule alternating_schedule(const std::vector<SvModelSpec>& models, std::size_t total_steps,
                                    std::size_t min_len, std::size_t max_len, std::uint64_t seed) {
    if (models.empty()) throw ConfigError("alternating_schedule: no models");
    if (min_len == 0 || max_len < min_len) throw ConfigError("alternating_schedule: need 0 < min_len <= max_len");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> length(min_len, max_len);
    RegimeSchedule schedule;
    std::size_t start = 0;
    for (std::size_t i = 0; start < total_steps || schedule.segments.empty(); ++i) {
        const int label = static_cast<int>(i % models.size());
        schedule.segments.push_back({start, label, models[static_cast<std::size_t>(label)]});
        start += length(rng);
    }
    return schedule;
}

SimulatedPath simulate_paths(const RegimeSchedule& schedule, double dt, double horizon, std::uint64_t seed) {
    schedule.validate();
    if (!(dt > 0.0)) throw ConfigError("simulate_paths: dt must be positive");
    const double steps_real = horizon / dt;
    const auto steps = static_cast<std::size_t>(std::llround(steps_real));
    if (!(horizon > 0.0) || std::abs(steps_real - static_cast<double>(steps)) > 1e-9 * std::max(1.0, steps_real))
        throw ConfigError("simulate_paths: horizon must be a positive multiple of dt");

    SimulatedPath path;
    path.dt = dt;
    path.s.resize(steps + 1);
    path.v.resize(steps + 1);
    path.label.resize(steps + 1);
    const SvModelSpec& first = schedule.segments.front().model;
    path.s[0] = first.s0;
    path.v[0] = first.v0;

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double sqrt_dt = std::sqrt(dt);
    double log_s = std::log(first.s0);
    for (std::size_t i = 0; i < steps; ++i) {
        const RegimeSegment& seg = schedule.segment_at(i);
        const SvModelSpec& m = seg.model;
        path.label[i] = seg.label;
        const double v = path.v[i];
        const double dw1 = sqrt_dt * normal(rng);
        const double dw2 = sqrt_dt * normal(rng);

        double jump = 0.0;
        if (m.jump_intensity > 0.0) {
            std::poisson_distribution<int> count(m.jump_intensity * dt);
            const int n = count(rng);
            for (int j = 0; j < n; ++j) jump += m.jump_mean + m.jump_sd * normal(rng);
            path.jumps += static_cast<std::size_t>(n);
        }
        const double drift = m.r - m.d - m.jump_intensity * m.mean_jump();
        log_s += (drift - 0.5 * v * v) * dt + v * dw1 + jump;
        path.s[i + 1] = std::exp(log_s);

        double next = v + m.mu_fn(v) * dt + m.gamma_fn(v) * dw1 + m.eta_fn(v) * dw2;
        if (next < 0.0) {
            next = -next;
            ++path.reflections;
        }
        path.v[i + 1] = std::max(next, 1e-12);
    }
    path.label[steps] = schedule.segment_at(steps).label;
    return path;
}

double sabr_implied_vol(double k, double tau, double alpha, double rho, double nu) {
    if (!(alpha > 0.0)) throw NumericalError("sabr_implied_vol: alpha must be positive");
    rho = std::clamp(rho, -0.999999, 0.999999);
    const double z = -(nu / alpha) * k;
    double ratio;
    if (std::abs(z) < 1e-7) {
        ratio = 1.0 - 0.5 * rho * z + (2.0 - 3.0 * rho * rho) * z * z / 12.0;
    } else {
        const double x = std::log((std::sqrt(1.0 - 2.0 * rho * z + z * z) + z - rho) / (1.0 - rho));
        ratio = z / x;
    }
    const double correction = 1.0 + (0.25 * rho * nu * alpha + (2.0 - 3.0 * rho * rho) * nu * nu / 24.0) * tau;
    return alpha * ratio * correction;
}

double expansion_implied_vol(const SvModelSpec& model, double v, double k, double tau) {
    const double gamma = model.gamma_fn(v);
    const double eta = model.eta_fn(v);
    const double omega = std::sqrt(gamma * gamma + eta * eta);
    const double alpha = v + 0.5 * model.mu_fn(v) * tau;
    if (!(alpha > 0.0)) throw NumericalError("expansion_implied_vol: drift pushes the ATM level below zero");
    if (omega == 0.0) return alpha;
    return sabr_implied_vol(k, tau, alpha, gamma / omega, omega / v);
}

std::vector<double> mc_prices(const SvModelSpec& model, double spot, double v, const std::vector<Contract>& contracts,
                              const McPricingOptions& options, std::uint64_t seed) {
    if (contracts.empty()) return {};
    if (options.n_paths < 2 || options.steps_per_day < 1) throw ConfigError("mc_prices: invalid options");
    const double h = 1.0 / (365.0 * options.steps_per_day);
    std::vector<std::size_t> maturity_step(contracts.size());
    std::size_t max_step = 0;
    for (std::size_t c = 0; c < contracts.size(); ++c) {
        maturity_step[c] = std::max<std::size_t>(1, static_cast<std::size_t>(std::llround(contracts[c].tau / h)));
        max_step = std::max(max_step, maturity_step[c]);
    }
    // contracts grouped by maturity step
    std::vector<std::vector<std::size_t>> due(max_step + 1);
    for (std::size_t c = 0; c < contracts.size(); ++c) due[maturity_step[c]].push_back(c);

    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const double sqrt_h = std::sqrt(h);
    const double drift = model.r - model.d - model.jump_intensity * model.mean_jump();
    std::vector<double> payoff_sum(contracts.size(), 0.0);
    const int pairs = options.n_paths / 2;
    std::poisson_distribution<int> jump_count(model.jump_intensity * h);
    for (int p = 0; p < pairs; ++p) {
        double log_s[2] = {std::log(spot), std::log(spot)};
        double vol[2] = {v, v};
        for (std::size_t step = 1; step <= max_step; ++step) {
            const double z1 = normal(rng);
            const double z2 = normal(rng);
            double jump = 0.0;
            if (model.jump_intensity > 0.0) {
                const int n = jump_count(rng);
                for (int j = 0; j < n; ++j) jump += model.jump_mean + model.jump_sd * normal(rng);
            }
            for (int a = 0; a < 2; ++a) {
                const double sign = a == 0 ? 1.0 : -1.0;
                const double dw1 = sign * sqrt_h * z1;
                const double dw2 = sign * sqrt_h * z2;
                const double cur = vol[a];
                log_s[a] += (drift - 0.5 * cur * cur) * h + cur * dw1 + jump;
                double next = cur + model.mu_fn(cur) * h + model.gamma_fn(cur) * dw1 + model.eta_fn(cur) * dw2;
                vol[a] = std::max(std::abs(next), 1e-12);
            }
            for (std::size_t c : due[step]) {
                const Contract& ct = contracts[c];
                for (int a = 0; a < 2; ++a) {
                    const double s = std::exp(log_s[a]);
                    payoff_sum[c] += ct.kind == OptionKind::Call ? std::max(s - ct.strike, 0.0)
                                                                 : std::max(ct.strike - s, 0.0);
                }
            }
        }
    }
    std::vector<double> prices(contracts.size());
    for (std::size_t c = 0; c < contracts.size(); ++c) {
        const double tau = static_cast<double>(maturity_step[c]) * h;
        prices[c] = std::exp(-model.r * tau) * payoff_sum[c] / (2.0 * pairs);
    }
    return prices;
}

std::string synthetic_instrument_id(const std::string& underlying, double expiry_days, double moneyness,
                                    OptionKind kind) {
    char buf[96];
    std::snprintf(buf, sizeof buf, "%s-%gD-M%04ld-%c", underlying.c_str(), expiry_days,
                  std::lround(moneyness * 1000.0), kind == OptionKind::Call ? 'C' : 'P');
    return buf;
}

EmittedMarket emit_quotes(const SimulatedPath& path, const RegimeSchedule& schedule, const QuoteGridSpec& grid,
                          const EmitOptions& options) {
    if (grid.moneyness.empty() || grid.expiry_days.empty()) throw ConfigError("emit_quotes: empty strike or expiry grid");
    if (grid.steps_per_quote == 0) throw ConfigError("emit_quotes: steps_per_quote must be positive");
    EmittedMarket out;
    std::mt19937_64 rng(options.seed);
    std::normal_distribution<double> noise(0.0, 1.0);

    struct Instrument {
        double days;
        double moneyness;
        OptionKind kind;
        std::string id;
    };
    std::vector<Instrument> instruments;
    for (double e : grid.expiry_days) {
        for (double m : grid.moneyness) {
            const OptionKind kind = m < 1.0 ? OptionKind::Put : OptionKind::Call;
            instruments.push_back({e, m, kind, synthetic_instrument_id(grid.underlying, e, m, kind)});
        }
    }

    for (std::size_t q = 0, i = 0; i < path.size(); ++q, i += grid.steps_per_quote) {
        const Timestamp ts = grid.start + grid.quote_interval * q;
        const SvModelSpec& model = schedule.segment_at(i).model;
        const double spot = path.s[i];
        const double v = path.v[i];
        out.truth.push_back({ts, path.label[i], spot, v});

        std::vector<double> prices(instruments.size());
        std::vector<Contract> contracts;
        for (const auto& ins : instruments) {
            const double tau = ins.days / 365.0;
            const double forward = spot * std::exp((model.r - model.d) * tau);
            contracts.push_back({ins.moneyness * forward, tau, ins.kind});
        }
        if (options.engine == PricingEngine::MonteCarlo) {
            prices = mc_prices(model, spot, v, contracts, options.mc, options.seed ^ (0x9E3779B97F4A7C15ULL * (q + 1)));
        } else {
            for (std::size_t c = 0; c < contracts.size(); ++c) {
                const double sigma = expansion_implied_vol(model, v, std::log(instruments[c].moneyness), contracts[c].tau);
                prices[c] = bs_price(spot, contracts[c].strike, contracts[c].tau, model.r, model.d, sigma, contracts[c].kind);
            }
        }

        for (std::size_t c = 0; c < contracts.size(); ++c) {
            double iv;
            try {
                iv = implied_vol(prices[c], spot, contracts[c].strike, contracts[c].tau, model.r, model.d,
                                 contracts[c].kind);
            } catch (const DataError&) {
                ++out.dropped;
                continue;
            }
            if (options.iv_noise_sd > 0.0) iv += options.iv_noise_sd * noise(rng);
            if (!(iv > 0.0)) {
                ++out.dropped;
                continue;
            }
            OptionQuote quote;
            quote.timestamp = ts;
            quote.instrument_id = instruments[c].id;
            quote.expiry = ts + Duration{std::llround(instruments[c].days * 86400.0)};
            quote.strike = contracts[c].strike;
            quote.kind = contracts[c].kind;
            quote.underlying_price = spot;
            quote.implied_vol = iv;
            out.quotes.push_back(std::move(quote));
        }
    }
    return out;
}

std::vector<int> block_labels(std::size_t n_times, int k, std::size_t min_len, std::size_t max_len,
                              std::uint64_t seed) {
    if (k < 1 || min_len == 0 || max_len < min_len) throw ConfigError("block_labels: invalid arguments");
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<std::size_t> length(min_len, max_len);
    std::vector<int> labels;
    labels.reserve(n_times);
    for (int block = 0; labels.size() < n_times; ++block) {
        const std::size_t len = length(rng);
        for (std::size_t i = 0; i < len && labels.size() < n_times; ++i) labels.push_back(block % k);
    }
    return labels;
}

Eigen::MatrixXd gaussian_regime_panel(const std::vector<GaussianRegime>& regimes, const std::vector<int>& labels,
                                      std::uint64_t seed) {
    if (regimes.empty()) throw ConfigError("gaussian_regime_panel: no regimes");
    const Eigen::Index n = regimes.front().mean.size();
    std::vector<Eigen::MatrixXd> factors;
    for (const auto& r : regimes) {
        if (r.mean.size() != n || r.covariance.rows() != n || r.covariance.cols() != n)
            throw ConfigError("gaussian_regime_panel: inconsistent dimensions");
        Eigen::LLT<Eigen::MatrixXd> llt(r.covariance);
        if (llt.info() != Eigen::Success) throw ConfigError("gaussian_regime_panel: covariance not positive definite");
        factors.push_back(llt.matrixL());
    }
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::MatrixXd out(n, static_cast<Eigen::Index>(labels.size()));
    Eigen::VectorXd z(n);
    for (std::size_t t = 0; t < labels.size(); ++t) {
        const auto l = static_cast<std::size_t>(labels[t]);
        if (l >= regimes.size()) throw ConfigError("gaussian_regime_panel: label out of range");
        for (Eigen::Index i = 0; i < n; ++i) z(i) = normal(rng);
        out.col(static_cast<Eigen::Index>(t)) = regimes[l].mean + factors[l] * z;
    }
    return out;
}

} // namespace mrisvm
