#include "mrisvm/surface.hpp"

#include "mrisvm/errors.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <vector>

namespace mrisvm {

SurfaceCoefficients SurfaceCoefficients::from_array(const std::array<double, 7>& b) {
    SurfaceCoefficients c;
    c.b10 = b[0];
    c.b00 = b[1];
    c.b20 = b[2];
    c.b01 = b[3];
    c.b11 = b[4];
    c.b21 = b[5];
    c.b02 = b[6];
    return c;
}

std::array<double, 7> surface_regressors(double tau, double k) {
    return {1.0, tau, tau * tau, k, tau * k, tau * tau * k, k * k};
}

SurfaceCoefficients fit_surface(std::span<const IvObservation> obs) {
    std::vector<SurfacePoint> points;
    points.reserve(obs.size());
    for (const auto& o : obs) points.push_back({o.tau, o.k, o.iv});
    SurfaceCoefficients c = fit_surface(std::span<const SurfacePoint>(points));
    c.timestamp = obs.front().timestamp;
    return c;
}

SurfaceCoefficients fit_surface(std::span<const SurfacePoint> obs) {
    const auto n = static_cast<Eigen::Index>(obs.size());
    if (n < kSurfaceTerms) throw DataError("degenerate surface sample: fewer than 7 observations");

    Eigen::Matrix<double, Eigen::Dynamic, kSurfaceTerms> x(n, kSurfaceTerms);
    Eigen::VectorXd y(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& o = obs[static_cast<std::size_t>(i)];
        const auto row = surface_regressors(o.tau, o.k);
        for (int j = 0; j < kSurfaceTerms; ++j) x(i, j) = row[static_cast<std::size_t>(j)];
        y(i) = o.iv;
    }
    // Column scaling keeps the rank decision independent of the tau/k units.
    Eigen::Matrix<double, 1, kSurfaceTerms> scale = x.colwise().norm();
    for (int j = 0; j < kSurfaceTerms; ++j) {
        if (!(scale(j) > 0.0)) throw DataError("degenerate surface sample: all-zero regressor");
    }
    const Eigen::MatrixXd xs = x.array().rowwise() / scale.array();

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(xs);
    qr.setThreshold(1e-10);
    if (qr.rank() < kSurfaceTerms) throw DataError("degenerate surface sample: rank-deficient design");
    const Eigen::VectorXd beta = qr.solve(y).array() / scale.transpose().array();

    std::array<double, 7> b{};
    for (int j = 0; j < kSurfaceTerms; ++j) b[static_cast<std::size_t>(j)] = beta(j);
    SurfaceCoefficients c = SurfaceCoefficients::from_array(b);
    for (double v : b) {
        if (!std::isfinite(v)) throw DataError("degenerate surface sample: non-finite coefficients");
    }
    c.n_obs = static_cast<int>(n);
    const Eigen::VectorXd resid = y - x * beta;
    c.residual_rmse = std::sqrt(resid.squaredNorm() / static_cast<double>(n));
    return c;
}

double evaluate_surface(const SurfaceCoefficients& c, double tau, double k) {
    return c.b10 + c.b00 * tau + c.b20 * tau * tau + c.b01 * k + c.b11 * tau * k + c.b21 * tau * tau * k +
           c.b02 * k * k;
}

} // namespace mrisvm
