#include "mrisvm/black_scholes.hpp"
#include "mrisvm/errors.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace mrisvm;

TEST_CASE("normal distribution") {
    CHECK(normal_cdf(0.0) == 0.5);
    CHECK(normal_cdf(1.959963984540054) == doctest::Approx(0.975).epsilon(1e-12));
    CHECK(normal_cdf(-8.0) == doctest::Approx(6.22096057427178e-16).epsilon(1e-8));
    CHECK(normal_pdf(0.0) == doctest::Approx(0.3989422804014327));
}

TEST_CASE("price limits") {
    // expiry and zero vol give intrinsic / discounted forward values
    CHECK(bs_price(100, 90, 0.0, 0.05, 0.0, 0.3, OptionKind::Call) == 10.0);
    CHECK(bs_price(100, 90, -1.0, 0.05, 0.0, 0.3, OptionKind::Put) == 0.0);
    const double fwd = 100 * std::exp(-0.01 * 0.5) - 90 * std::exp(-0.05 * 0.5);
    CHECK(bs_price(100, 90, 0.5, 0.05, 0.01, 0.0, OptionKind::Call) == doctest::Approx(fwd));
    CHECK(bs_price(100, 90, 0.5, 0.05, 0.01, 0.0, OptionKind::Put) == 0.0);

    // ATM-forward approximation 0.3989 S e^{-d tau} vol sqrt(tau)
    const double tau = 0.25, vol = 0.1, r = 0.03, d = 0.01;
    const double strike = 100 * std::exp((r - d) * tau);
    const double approx = 0.3989422804014327 * 100 * std::exp(-d * tau) * vol * std::sqrt(tau);
    CHECK(std::abs(bs_price(100, strike, tau, r, d, vol, OptionKind::Call) / approx - 1) < 0.01);
}

TEST_CASE("put-call parity and vega") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> m(0.5, 1.5), t(0.01, 3.0), v(0.05, 2.0), rr(-0.02, 0.1);
    for (int i = 0; i < 500; ++i) {
        const double k = 100 * m(rng), tau = t(rng), vol = v(rng), r = rr(rng), d = rr(rng);
        const double c = bs_price(100, k, tau, r, d, vol, OptionKind::Call);
        const double p = bs_price(100, k, tau, r, d, vol, OptionKind::Put);
        CHECK(std::abs(c - p - (100 * std::exp(-d * tau) - k * std::exp(-r * tau))) < 1e-10);
        const double h = 1e-5;
        const double fd = (bs_price(100, k, tau, r, d, vol + h, OptionKind::Call) -
                           bs_price(100, k, tau, r, d, vol - h, OptionKind::Call)) /
                          (2 * h);
        CHECK(bs_vega(100, k, tau, r, d, vol) == doctest::Approx(fd).epsilon(1e-6));
    }
}

TEST_CASE("bounds") {
    const PriceBounds c = bs_price_bounds(100, 90, 1.0, 0.05, 0.02, OptionKind::Call);
    CHECK(c.lower == doctest::Approx(100 * std::exp(-0.02) - 90 * std::exp(-0.05)));
    CHECK(c.upper == doctest::Approx(100 * std::exp(-0.02)));
    const PriceBounds p = bs_price_bounds(100, 90, 1.0, 0.05, 0.02, OptionKind::Put);
    CHECK(p.lower == 0.0);
    CHECK(p.upper == doctest::Approx(90 * std::exp(-0.05)));
}

TEST_CASE("implied vol round trip") {
    for (double vol : {0.1, 0.5, 1.5})
        for (OptionKind kind : {OptionKind::Call, OptionKind::Put})
            for (double k : {80.0, 100.0, 125.0}) {
                const double price = bs_price(100, k, 0.3, 0.02, 0.01, vol, kind);
                CHECK(std::abs(implied_vol(price, 100, k, 0.3, 0.02, 0.01, kind) - vol) < 1e-8);
            }

    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> m(0.7, 1.3), t(7.0 / 365, 2.0), v(0.1, 1.5), rr(0.0, 0.05);
    double worst = 0.0;
    for (int i = 0; i < 1000; ++i) {
        const OptionKind kind = i % 2 ? OptionKind::Call : OptionKind::Put;
        const double k = 100 * m(rng), tau = t(rng), vol = v(rng), r = rr(rng), d = rr(rng);
        const double price = bs_price(100, k, tau, r, d, vol, kind);
        const double iv = implied_vol(price, 100, k, tau, r, d, kind);
        worst = std::max(worst, std::abs(bs_price(100, k, tau, r, d, iv, kind) - price));
    }
    CHECK(worst < 1e-7);
}

TEST_CASE("implied vol errors") {
    const PriceBounds b = bs_price_bounds(100, 90, 0.5, 0.0, 0.0, OptionKind::Call);
    CHECK_THROWS_AS(implied_vol(b.lower, 100, 90, 0.5, 0.0, 0.0, OptionKind::Call), DataError);
    CHECK_THROWS_AS(implied_vol(b.upper, 100, 90, 0.5, 0.0, 0.0, OptionKind::Call), DataError);
    CHECK_THROWS_AS(implied_vol(-1.0, 100, 90, 0.5, 0.0, 0.0, OptionKind::Put), DataError);
    CHECK_THROWS_AS(implied_vol(5.0, 100, 90, 0.0, 0.0, 0.0, OptionKind::Put), DataError);
    CHECK_THROWS_AS(implied_vol(5.0, -100, 90, 0.5, 0.0, 0.0, OptionKind::Put), DataError);
}
