#pragma once

#include "mrisvm/market_data.hpp"

namespace mrisvm {

double normal_cdf(double x);
double normal_pdf(double x);

// European price with continuous rate r and dividend yield d. tau <= 0 gives intrinsic value.
double bs_price(double spot, double strike, double tau, double r, double d, double vol, OptionKind kind);

double bs_vega(double spot, double strike, double tau, double r, double d, double vol);

// No-arbitrage price bounds (lower exclusive, upper exclusive) for tau > 0.
struct PriceBounds {
    double lower = 0.0;
    double upper = 0.0;
};
PriceBounds bs_price_bounds(double spot, double strike, double tau, double r, double d, OptionKind kind);

// Newton iteration safeguarded by a bisection bracket. Throws DataError when the
// price is outside the open no-arbitrage interval.
double implied_vol(double price, double spot, double strike, double tau, double r, double d,
                   OptionKind kind);

} // namespace mrisvm
