#include "mrisvm/black_scholes.hpp"

#include "mrisvm/errors.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace mrisvm {

double normal_cdf(double x) { return 0.5 * std::erfc(-x / std::numbers::sqrt2); }

double normal_pdf(double x) { return std::exp(-0.5 * x * x) / std::sqrt(2.0 * std::numbers::pi); }

double bs_price(double spot, double strike, double tau, double r, double d, double vol, OptionKind kind) {
    if (tau <= 0.0) {
        return kind == OptionKind::Call ? std::max(spot - strike, 0.0) : std::max(strike - spot, 0.0);
    }
    const double df_r = std::exp(-r * tau);
    const double df_d = std::exp(-d * tau);
    const double sd = vol * std::sqrt(tau);
    if (sd <= 0.0) {
        const double fwd_value = spot * df_d - strike * df_r;
        return kind == OptionKind::Call ? std::max(fwd_value, 0.0) : std::max(-fwd_value, 0.0);
    }
    const double d1 = (std::log(spot / strike) + (r - d) * tau) / sd + 0.5 * sd;
    const double d2 = d1 - sd;
    if (kind == OptionKind::Call) return spot * df_d * normal_cdf(d1) - strike * df_r * normal_cdf(d2);
    return strike * df_r * normal_cdf(-d2) - spot * df_d * normal_cdf(-d1);
}

double bs_vega(double spot, double strike, double tau, double r, double d, double vol) {
    if (tau <= 0.0 || vol <= 0.0) return 0.0;
    const double sd = vol * std::sqrt(tau);
    const double d1 = (std::log(spot / strike) + (r - d) * tau) / sd + 0.5 * sd;
    return spot * std::exp(-d * tau) * normal_pdf(d1) * std::sqrt(tau);
}

PriceBounds bs_price_bounds(double spot, double strike, double tau, double r, double d, OptionKind kind) {
    const double s = spot * std::exp(-d * tau);
    const double k = strike * std::exp(-r * tau);
    if (kind == OptionKind::Call) return {std::max(s - k, 0.0), s};
    return {std::max(k - s, 0.0), k};
}

double implied_vol(double price, double spot, double strike, double tau, double r, double d, OptionKind kind) {
    if (!(spot > 0.0 && strike > 0.0 && tau > 0.0)) throw DataError("implied_vol: spot, strike and tau must be positive");
    const PriceBounds bounds = bs_price_bounds(spot, strike, tau, r, d, kind);
    if (!(price > bounds.lower && price < bounds.upper))
        throw DataError("implied_vol: price outside no-arbitrage bounds");

    double lo = 0.0;
    double hi = 1.0;
    while (bs_price(spot, strike, tau, r, d, hi, kind) < price) {
        lo = hi;
        hi *= 2.0;
        if (hi > 1e3) throw DataError("implied_vol: no root below 1000% volatility");
    }

    // Start from the Brenner-Subrahmanyam style guess, clipped into the bracket.
    double vol = std::clamp(std::sqrt(2.0 * std::abs(std::log(spot / strike) + (r - d) * tau) / tau), 0.05, 1.0);
    vol = std::clamp(vol, lo, hi);
    for (int iter = 0; iter < 200; ++iter) {
        const double diff = bs_price(spot, strike, tau, r, d, vol, kind) - price;
        if (diff > 0.0) hi = vol;
        else lo = vol;
        if (diff == 0.0 || hi - lo <= 1e-15 * std::max(1.0, hi)) break;
        const double vega = bs_vega(spot, strike, tau, r, d, vol);
        double next = vega > 0.0 ? vol - diff / vega : 0.5 * (lo + hi);
        if (!(next > lo && next < hi)) next = 0.5 * (lo + hi);
        if (std::abs(next - vol) <= 1e-15 * std::max(1.0, vol)) {
            vol = next;
            break;
        }
        vol = next;
    }
    return vol;
}

} // namespace mrisvm
