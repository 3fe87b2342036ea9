#include "mrisvm/errors.hpp"
#include "mrisvm/market_data.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

using namespace mrisvm;
using namespace std::chrono;

namespace {

const Timestamp kT0 = parse_iso8601("2022-01-23T00:00:00Z");

OptionQuote quote(Timestamp ts, Duration to_expiry, double strike, double spot, double iv, std::string id = "q") {
    OptionQuote q;
    q.timestamp = ts;
    q.instrument_id = std::move(id);
    q.expiry = ts + to_expiry;
    q.strike = strike;
    q.underlying_price = spot;
    q.implied_vol = iv;
    return q;
}

IvObservation obs(Timestamp ts, double tau, double k, double iv, std::string id = "o") {
    return {ts, std::move(id), tau, k, iv};
}

std::vector<IvObservation> random_obs(std::mt19937_64& rng, int n) {
    std::uniform_real_distribution<double> tau(1.0 / 365, 90.0 / 365), k(-0.4, 0.4), iv(0.2, 1.5);
    std::vector<IvObservation> out;
    for (int i = 0; i < n; ++i)
        out.push_back(obs(kT0 + minutes{20 * (i % 5)}, tau(rng), k(rng), iv(rng), "i" + std::to_string(i)));
    return out;
}

} // namespace

TEST_CASE("normalize: atm forward and direct formula") {
    std::vector<OptionQuote> q{quote(kT0, days{365}, 100.0 * std::exp(0.03 * 1.0), 100.0, 0.5),
                               quote(kT0, days{365}, 200.0, 100.0, 0.5)};
    const auto atm = normalize(std::span(q).first(1), 0.05, 0.02);
    REQUIRE(atm.observations.size() == 1);
    CHECK(atm.observations[0].k == doctest::Approx(0.0).epsilon(1e-14));
    const auto r = normalize(std::span(q).last(1), 0.0, 0.0);
    CHECK(r.observations[0].tau == doctest::Approx(1.0));
    CHECK(r.observations[0].k == doctest::Approx(std::log(2.0)));
    CHECK(r.observations[0].iv == 0.5);
}

TEST_CASE("normalize: rejects with reasons, matches per-quote recomputation") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> u(0.5, 1.5);
    std::vector<OptionQuote> q;
    for (int i = 0; i < 100; ++i) q.push_back(quote(kT0, hours{1 + 24 * i}, 100 * u(rng), 100 * u(rng), u(rng)));
    q.push_back(quote(kT0, seconds{0}, 100, 100, 0.5));
    q.push_back(quote(kT0, days{1}, -1, 100, 0.5));
    q.push_back(quote(kT0, days{1}, 100, 100, 0.0));
    q.push_back(quote(kT0, days{1}, 100, 0.0, 0.5));
    q.push_back(quote(kT0, days{1}, 100, 100, std::nan("")));
    const double r = 0.01, d = 0.03;
    const auto n = normalize(q, r, d);
    REQUIRE(n.observations.size() == 100);
    REQUIRE(n.rejected.size() == 5);
    CHECK(n.rejected[0].reason == RejectReason::ExpiredOrExpiring);
    CHECK(n.rejected[1].reason == RejectReason::NonPositiveStrike);
    CHECK(n.rejected[2].reason == RejectReason::NonPositiveVol);
    CHECK(n.rejected[3].reason == RejectReason::NonPositiveUnderlying);
    CHECK(n.rejected[4].reason == RejectReason::NonFinite);
    CHECK(n.rejected[0].index == 100);
    for (int i = 0; i < 100; ++i) {
        const double tau = (1.0 + 24.0 * i) / (365.0 * 24.0);
        const double fwd = q[i].underlying_price * std::exp((r - d) * tau);
        CHECK(n.observations[i].tau == doctest::Approx(tau).epsilon(1e-14));
        CHECK(n.observations[i].k == doctest::Approx(std::log(q[i].strike / fwd)).epsilon(1e-13));
        // strike recovered from (k, forward)
        CHECK(std::abs(fwd * std::exp(n.observations[i].k) / q[i].strike - 1.0) < 1e-10);
    }
}

TEST_CASE("filter_for_clustering") {
    const std::vector<IvObservation> o{obs(kT0, 7.0 / 365, 0.0, 0.5), obs(kT0, 3.0 / 365, std::log(1.25), 0.5),
                                       obs(kT0, 8.0 / 365, 0.0, 0.5), obs(kT0, 1.0 / 365, std::log(0.8), 0.5)};
    const auto f = filter_for_clustering(o, {0.8, 1.2}, 7.0);
    REQUIRE(f.size() == 2);
    CHECK(f[0].tau == doctest::Approx(7.0 / 365));
    CHECK(f[1].k == doctest::Approx(std::log(0.8)));
    CHECK_THROWS_AS(filter_for_clustering(std::span(o).subspan(2, 1), {0.8, 1.2}, 7.0), DataError);
    // strike/forward a few ulps under the edge still counts as on the edge
    const std::vector<IvObservation> edge{obs(kT0, 3.0 / 365, std::log(35483.503008654072 / 40322.162509834168), 0.5),
                                          obs(kT0, 3.0 / 365, std::log(0.8799), 0.5)};
    CHECK(filter_for_clustering(edge, {0.88, 1.04}, 7.0).size() == 1);

    std::mt19937_64 rng(9);
    const auto batch = random_obs(rng, 50);
    const auto kept = filter_for_clustering(batch, {0.8, 1.2}, 30.0);
    std::vector<IvObservation> oracle;
    for (const auto& b : batch) {
        const double m = std::exp(b.k);
        if (m >= 0.8 - 1e-15 && m <= 1.2 + 1e-15 && b.tau * 365.0 <= 30.0 + 1e-12) oracle.push_back(b);
    }
    REQUIRE(kept.size() == oracle.size());
    for (std::size_t i = 0; i < kept.size(); ++i) CHECK(kept[i].instrument_id == oracle[i].instrument_id);
    CHECK(filter_for_clustering(kept, {0.8, 1.2}, 30.0).size() == kept.size());
}

TEST_CASE("filter_for_isvm") {
    const std::map<Timestamp, double> v{{kT0, 0.8}};
    const std::vector<IvObservation> o{obs(kT0, 0.25, 0.41, 0.5), obs(kT0, 0.25, -0.4, 0.5),
                                       obs(kT0, 4.0 / 365, 0.0, 0.5), obs(kT0, 5.0 / 365, 0.0, 0.5),
                                       obs(kT0, 60.0 / 365, 0.0, 0.5)};
    const auto f = filter_for_isvm(o, {5, 120}, v);
    REQUIRE(f.size() == 3);
    CHECK(f[0].k == -0.4);
    CHECK(filter_for_isvm(o, {5, 60}, v).size() == 2);
    CHECK(filter_for_isvm(std::span(o).first(2), {5, 120}, v).size() == 1);
    const std::vector<IvObservation> late{obs(kT0 + minutes{20}, 0.1, 0.0, 0.5)};
    try {
        filter_for_isvm(late, {5, 60}, v);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()).find("2022-01-23T00:20:00Z") != std::string::npos);
    }

    std::mt19937_64 rng(10);
    auto batch = random_obs(rng, 200);
    std::map<Timestamp, double> vols;
    for (const auto& b : batch) vols[b.timestamp] = 0.5 + 0.1 * static_cast<double>(vols.size());
    const auto kept = filter_for_isvm(batch, {5, 60}, vols);
    std::size_t expect = 0;
    for (const auto& b : batch) {
        const double days365 = b.tau * 365.0;
        if (days365 >= 5 - 1e-12 && days365 <= 60 + 1e-12 && std::abs(b.k) <= vols[b.timestamp] * std::sqrt(b.tau)) ++expect;
    }
    CHECK(kept.size() == expect);
    CHECK(filter_for_isvm(kept, {5, 60}, vols).size() == kept.size());
}

TEST_CASE("instantaneous vol") {
    CHECK(estimate_instantaneous_vol(std::vector{obs(kT0, 0.1, 0.2, 0.7)}) == 0.7);
    CHECK(estimate_instantaneous_vol(std::vector{obs(kT0, 0.2, 0.1, 0.9), obs(kT0, 0.01, 0.0, 0.6)}) == 0.6);
    CHECK_THROWS_AS(estimate_instantaneous_vol(std::vector<IvObservation>{}), DataError);
    // equal distance: smaller tau wins
    CHECK(estimate_instantaneous_vol(std::vector{obs(kT0, 0.1, 0.0, 0.5, "b"), obs(kT0, 0.0, 0.1, 0.4, "a"),
                                                 obs(kT0, 0.1, 0.1, 0.3, "c")}) == 0.4);

    std::mt19937_64 rng(12);
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<IvObservation> batch;
        std::uniform_real_distribution<double> tau(1.0 / 365, 0.2), k(-0.3, 0.3), iv(0.1, 2.0);
        for (int i = 0; i < 20; ++i) batch.push_back(obs(kT0, tau(rng), k(rng), iv(rng)));
        double tmax = 0, kmax = 0;
        for (const auto& b : batch) {
            tmax = std::max(tmax, b.tau);
            kmax = std::max(kmax, std::abs(b.k));
        }
        double best = 1e300, iv_best = 0;
        for (const auto& b : batch) {
            const double d = std::hypot(b.tau / tmax, b.k / kmax);
            if (d < best) {
                best = d;
                iv_best = b.iv;
            }
        }
        CHECK(estimate_instantaneous_vol(batch) == iv_best);
    }
}

TEST_CASE("window arithmetic") {
    RollingWindowSpec s;
    CHECK(window_count(s) == 360);
    s.window_length = days{1};
    CHECK(window_count(s) == 72);
    s.window_length = days{5};
    s.sampling_interval = minutes{10};
    CHECK(window_count(s) == 720);
    s.sampling_interval = minutes{7};
    CHECK_THROWS_AS(s.validate(), ConfigError);

    RollingWindowSpec w;
    const Timestamp last = kT0 + days{5} - minutes{20};
    CHECK(window_starts(kT0, last, w).size() == 1);
    CHECK(window_starts(kT0, last - minutes{20}, w).empty());
    w.step = days{1};
    const auto starts = window_starts(kT0, kT0 + days{7}, w);
    REQUIRE(starts.size() == 3);
    CHECK(starts[2] == kT0 + days{2});

    const std::vector<IvObservation> o{obs(kT0, 0.1, 0, 0.5), obs(kT0 + days{5} - minutes{20}, 0.1, 0, 0.5),
                                       obs(kT0 + days{5}, 0.1, 0, 0.5)};
    CHECK(slice_window(o, kT0, RollingWindowSpec{}).size() == 2);
}

namespace {

// Reference fill: forward-fill then back-fill a single row.
std::vector<double> fill_oracle(const std::vector<std::optional<double>>& row) {
    std::vector<double> out(row.size(), std::nan(""));
    std::optional<double> last;
    for (std::size_t i = 0; i < row.size(); ++i) {
        if (row[i]) last = row[i];
        if (last) out[i] = *last;
    }
    std::size_t first = 0;
    while (!row[first]) ++first;
    for (std::size_t i = 0; i < first; ++i) out[i] = *row[first];
    return out;
}

} // namespace

TEST_CASE("build_panel: coverage threshold, imputation, observed values preserved") {
    RollingWindowSpec spec;
    spec.window_length = hours{10};
    const std::size_t n = window_count(spec);
    REQUIRE(n == 30);
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.3, 1.0);
    std::bernoulli_distribution keep(0.8);
    std::vector<IvObservation> all;
    std::map<std::string, std::vector<std::optional<double>>> truth;
    for (int a = 0; a < 6; ++a) {
        const std::string id = "asset" + std::to_string(a);
        auto& row = truth[id];
        row.assign(n, std::nullopt);
        for (std::size_t t = 0; t < n; ++t) {
            const bool observed = a == 0 ? true : a == 5 ? t < 18 : keep(rng);
            if (!observed) continue;
            if (a == 1 && t < 3) continue; // leading gap
            row[t] = u(rng);
            all.push_back(obs(kT0 + spec.sampling_interval * t, 0.01, 0.0, *row[t], id));
        }
    }
    // first column must exist so the grid starts at kT0
    const PanelMatrix p = build_panel(all, kT0, spec, 0.66);
    for (std::size_t i = 0; i < p.n_assets(); ++i) CHECK(p.asset_ids[i] != "asset5"); // 60% observed
    CHECK(p.values.allFinite());
    for (std::size_t i = 0; i < p.n_assets(); ++i) {
        const auto& row = truth[p.asset_ids[i]];
        const auto fill = fill_oracle(row);
        for (std::size_t t = 0; t < n; ++t) {
            const auto r = static_cast<Eigen::Index>(i), c = static_cast<Eigen::Index>(t);
            CHECK(p.mask(r, c) == row[t].has_value());
            CHECK(p.values(r, c) == fill[t]);
        }
    }
    for (std::size_t t = 1; t < p.n_times(); ++t) CHECK(p.timestamps[t] - p.timestamps[t - 1] == spec.sampling_interval);
}

TEST_CASE("build_panel: full panel unchanged, duplicates averaged, errors") {
    RollingWindowSpec spec;
    spec.window_length = hours{1};
    std::vector<IvObservation> o;
    for (int t = 0; t < 3; ++t) {
        o.push_back(obs(kT0 + minutes{20 * t}, 0.01, 0, 0.1 * (t + 1), "a"));
        o.push_back(obs(kT0 + minutes{20 * t}, 0.01, 0, 0.5, "b"));
    }
    o.push_back(obs(kT0, 0.02, 0, 0.3, "a"));
    o.push_back(obs(kT0 + minutes{7}, 0.02, 0, 9.9, "a")); // off grid
    const PanelMatrix p = build_panel(o, spec, 0.66);
    REQUIRE(p.n_assets() == 2);
    CHECK(p.mask.all());
    CHECK(p.values(0, 0) == doctest::Approx(0.2));
    CHECK(p.values(0, 2) == doctest::Approx(0.3));
    CHECK(p.values(1, 1) == 0.5);
    CHECK_THROWS_AS(build_panel(std::span(o).first(1), spec, 0.66), DataError);
    CHECK_THROWS_AS(build_panel(o, spec, 0.0), ConfigError);
}
