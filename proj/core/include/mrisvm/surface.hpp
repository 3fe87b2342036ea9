#pragma once

#include "mrisvm/market_data.hpp"

#include <array>
#include <span>

namespace mrisvm {

// Quadratic-in-k, quadratic-in-tau IV surface
//   iv = b10 + b00 tau + b20 tau^2 + b01 k + b11 tau k + b21 tau^2 k + b02 k^2.
// Superscripts follow the source convention: b10 is the intercept, b00 the tau slope.
struct SurfaceCoefficients {
    double b10 = 0.0;
    double b00 = 0.0;
    double b20 = 0.0;
    double b01 = 0.0;
    double b11 = 0.0;
    double b21 = 0.0;
    double b02 = 0.0;
    Timestamp timestamp{};
    int n_obs = 0;
    double residual_rmse = 0.0;

    std::array<double, 7> as_array() const { return {b10, b00, b20, b01, b11, b21, b02}; }
    static SurfaceCoefficients from_array(const std::array<double, 7>& b);
};

inline constexpr int kSurfaceTerms = 7;

// Regressor row (1, tau, tau^2, k, tau k, tau^2 k, k^2).
std::array<double, 7> surface_regressors(double tau, double k);

struct SurfacePoint {
    double tau = 0.0;
    double k = 0.0;
    double iv = 0.0;
};

// Least squares by column-pivoted QR. Throws DataError("degenerate surface
// sample") for fewer than 7 points or a rank-deficient design.
SurfaceCoefficients fit_surface(std::span<const IvObservation> obs);
SurfaceCoefficients fit_surface(std::span<const SurfacePoint> points);

double evaluate_surface(const SurfaceCoefficients& c, double tau, double k);

} // namespace mrisvm
