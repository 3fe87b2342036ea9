#include "mrisvm/errors.hpp"
#include "mrisvm/eval.hpp"
#include "mrisvm/icc.hpp"
#include "mrisvm/synth.hpp"

#include "test_support.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

using namespace mrisvm;

namespace {

ClusterStats stats_with(const Eigen::VectorXd& mean, const Eigen::MatrixXd& precision) {
    ClusterStats s;
    s.mean = mean;
    s.precision.matrix = precision;
    s.log_det = std::log(precision.determinant());
    s.member_count = 30;
    return s;
}

std::vector<GaussianRegime> distinct_regimes(int n) {
    GaussianRegime a, b;
    a.mean = Eigen::VectorXd::Zero(n);
    b.mean = Eigen::VectorXd::Zero(n);
    for (int i = 0; i < n; ++i) b.mean(i) = i % 2 ? 0.5 : -0.5;
    a.covariance = Eigen::MatrixXd::Identity(n, n);
    b.covariance = Eigen::MatrixXd::Identity(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            if ((i < n / 2) == (j < n / 2)) a.covariance(i, j) = 0.7;
            b.covariance(i, j) = 0.4;
        }
    return {a, b};
}

} // namespace

TEST_CASE("gain_euclidean") {
    const Eigen::Vector2d mu(0.3, -0.2);
    const ClusterStats s = stats_with(mu, Eigen::Matrix2d::Identity());
    CHECK(gain_euclidean(mu, s) == 0.0);
    CHECK(gain_euclidean(mu + Eigen::Vector2d(1, 1), s) == doctest::Approx(-2.0));

    std::mt19937_64 rng(1);
    std::normal_distribution<double> z;
    Eigen::VectorXd r(5), m(5);
    for (int i = 0; i < 5; ++i) {
        r(i) = z(rng);
        m(i) = z(rng);
    }
    double loop = 0.0;
    for (int i = 0; i < 5; ++i) loop -= (r(i) - m(i)) * (r(i) - m(i));
    CHECK(gain_euclidean(r, stats_with(m, Eigen::MatrixXd::Identity(5, 5))) == doctest::Approx(loop).epsilon(1e-14));
    CHECK_THROWS_AS(gain_euclidean(Eigen::Vector3d::Zero(), s), ConfigError);
}

TEST_CASE("gain_gaussian") {
    const Eigen::Vector2d mu(1.0, 2.0);
    const ClusterStats s = stats_with(mu, Eigen::Matrix2d::Identity());
    CHECK(gain_gaussian(mu, s, true) == doctest::Approx(0.0));
    CHECK(gain_gaussian(mu + Eigen::Vector2d(1, 0), s, true) == doctest::Approx(-1.0));
    CHECK(gain_gaussian(mu + Eigen::Vector2d(1, 0), s, false) == doctest::Approx(-0.5));

    std::mt19937_64 rng(2);
    std::normal_distribution<double> z;
    for (int rep = 0; rep < 10; ++rep) {
        const int n = 3 + rep % 4;
        const Eigen::MatrixXd p = testing::random_spd(n, rng);
        Eigen::VectorXd r(n), m(n);
        for (int i = 0; i < n; ++i) {
            r(i) = z(rng);
            m(i) = z(rng);
        }
        // dense oracle: eigenvalue log-det and explicit quadratic form
        const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(p);
        const double ld = es.eigenvalues().array().log().sum();
        double quad = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j) quad += (r(i) - m(i)) * p(i, j) * (r(j) - m(j));
        const ClusterStats st = stats_with(m, p);
        CHECK(mahalanobis_squared(r, st) == doctest::Approx(quad).epsilon(1e-12));
        CHECK(gain_gaussian(r, st, true) == doctest::Approx(0.5 * ld - n * quad / 2).epsilon(1e-12));
        CHECK(gain_gaussian(r, st, false) == doctest::Approx(0.5 * ld - quad / 2).epsilon(1e-12));
    }

    Eigen::Matrix2d bad;
    bad << 1, 2, 2, 1;
    CHECK_THROWS_AS(gain_gaussian(mu, stats_with(mu, bad), true), NumericalError);
}

TEST_CASE("penalized_gain and switches") {
    CHECK(penalized_gain(1.0, 0, 1, 0.0) == 1.0);
    CHECK(penalized_gain(1.0, 0, 1, 0.5) == 0.5);
    CHECK(penalized_gain(1.0, 1, 1, 0.5) == 1.0);
    CHECK(penalized_gain(1.0, 1, std::nullopt, 0.5) == 1.0);

    CHECK(count_switches({}) == 0);
    CHECK(count_switches({2}) == 0);
    CHECK(count_switches({0, 0, 1, 1, 0, 2, 2}) == 3);
    std::mt19937_64 rng(3);
    std::uniform_int_distribution<int> lab(0, 2);
    std::vector<int> labels(500);
    for (int& l : labels) l = lab(rng);
    int diff = 0;
    for (std::size_t t = 1; t < labels.size(); ++t)
        if (labels[t] != labels[t - 1]) ++diff;
    CHECK(count_switches(labels) == diff);
}

TEST_CASE("config validation") {
    IccConfig c;
    CHECK_NOTHROW(c.validate());
    CHECK(c.effective_min_cluster_size(10) == 25);
    CHECK(c.effective_min_cluster_size(40) == 41);
    c.min_cluster_size = 12;
    CHECK(c.effective_min_cluster_size(40) == 12);
    auto bad = [](auto mutate) {
        IccConfig x;
        mutate(x);
        return x;
    };
    CHECK_THROWS_AS(bad([](IccConfig& x) { x.max_iterations = 0; }).validate(), ConfigError);
    CHECK_THROWS_AS(bad([](IccConfig& x) { x.lambda_decay = 1.0; }).validate(), ConfigError);
    CHECK_THROWS_AS(bad([](IccConfig& x) { x.lambda_decay = 0.0; }).validate(), ConfigError);
    CHECK_THROWS_AS(bad([](IccConfig& x) { x.n_restarts = 0; }).validate(), ConfigError);
    CHECK_THROWS_AS(bad([](IccConfig& x) { x.k = 0; }).validate(), ConfigError);
}

TEST_CASE("identity precision: gaussian and euclidean rankings agree") {
    std::mt19937_64 rng(4);
    std::normal_distribution<double> z;
    const int n = 6;
    std::vector<ClusterStats> stats;
    for (int c = 0; c < 3; ++c) {
        Eigen::VectorXd m(n);
        for (int i = 0; i < n; ++i) m(i) = z(rng);
        stats.push_back(stats_with(m, Eigen::MatrixXd::Identity(n, n)));
    }
    Eigen::MatrixXd data(n, 80);
    for (int t = 0; t < 80; ++t)
        for (int i = 0; i < n; ++i) data(i, t) = z(rng);
    IccConfig eu, ga;
    eu.gain_kind = GainKind::Euclidean;
    eu.lambda = ga.lambda = 0.0;
    ga.gain_kind = GainKind::GaussianLikelihood;
    CHECK(assignment_sweep(data, stats, eu) == assignment_sweep(data, stats, ga));
    ga.factor_n_gain = true;
    CHECK(assignment_sweep(data, stats, eu) == assignment_sweep(data, stats, ga));
}

TEST_CASE("sweep does not lower the unpenalized objective") {
    std::mt19937_64 rng(5);
    const auto labels_true = block_labels(300, 2, 20, 60, 5);
    const Eigen::MatrixXd data = gaussian_regime_panel(distinct_regimes(8), labels_true, 6);
    std::uniform_int_distribution<int> lab(0, 1);
    IccConfig c;
    c.lambda = 0.0;
    for (int rep = 0; rep < 5; ++rep) {
        std::vector<int> labels(300);
        for (int& l : labels) l = lab(rng);
        std::vector<ClusterStats> stats;
        for (int k = 0; k < 2; ++k) {
            std::vector<int> cols;
            for (int t = 0; t < 300; ++t)
                if (labels[static_cast<std::size_t>(t)] == k) cols.push_back(t);
            stats.push_back(cluster_statistics(data, cols));
        }
        const auto swept = assignment_sweep(data, stats, c);
        CHECK(total_penalized_gain(data, stats, swept, c) >= total_penalized_gain(data, stats, labels, c));
    }
}

TEST_CASE("cluster_statistics") {
    std::mt19937_64 rng(6);
    std::normal_distribution<double> z;
    Eigen::MatrixXd data(5, 40);
    for (int t = 0; t < 40; ++t)
        for (int i = 0; i < 5; ++i) data(i, t) = z(rng);
    std::vector<int> cols;
    for (int t = 0; t < 40; t += 2) cols.push_back(t);
    const ClusterStats s = cluster_statistics(data, cols);
    CHECK(s.member_count == 20);
    Eigen::VectorXd mean = Eigen::VectorXd::Zero(5);
    for (int t : cols) mean += data.col(t);
    mean /= 20.0;
    CHECK((s.mean - mean).cwiseAbs().maxCoeff() < 1e-14);
    CHECK(s.log_det == doctest::Approx(log_det(s.precision.matrix)));
    CHECK(s.precision.matrix.isApprox(s.precision.matrix.transpose(), 1e-12));
    CHECK_THROWS_AS(cluster_statistics(data, {3}), DataError);
}

TEST_CASE("fit recovers two regimes") {
    const auto truth = block_labels(400, 2, 20, 80, 11);
    const Eigen::MatrixXd data = gaussian_regime_panel(distinct_regimes(10), truth, 12);
    IccConfig c;
    c.seed = 3;
    const RegimeAssignment r = fit(data, c);
    REQUIRE(r.labels.size() == 400);
    CHECK(std::all_of(r.labels.begin(), r.labels.end(), [](int l) { return l == 0 || l == 1; }));
    CHECK(r.n_switches == count_switches(r.labels));
    CHECK(r.stats.size() == 2);
    for (const auto& s : r.stats) CHECK(s.member_count >= c.effective_min_cluster_size(10));
    CHECK(r.cluster_sizes[0] + r.cluster_sizes[1] == 400);
    CHECK(label_accuracy(r.labels, truth, 2) >= 0.9);
    CHECK(r.objective == doctest::Approx(total_penalized_gain(data, r.stats, r.labels, c)));

    // deterministic given the seed
    const RegimeAssignment again = fit(data, c);
    CHECK(again.labels == r.labels);
    CHECK(again.objective == r.objective);

    // the best restart is never worse than the first initialisation alone
    IccConfig single = c;
    single.n_restarts = 1;
    CHECK(r.objective >= fit(data, single).objective);
    CHECK(fit(data, single).labels == fit_once(data, c, c.seed).labels);
}

TEST_CASE("fit on interleaved regimes") {
    // 200 + 200 timestamps alternating in blocks of 10
    std::vector<int> truth(400);
    for (std::size_t t = 0; t < 400; ++t) truth[t] = static_cast<int>((t / 10) % 2);
    const Eigen::MatrixXd data = gaussian_regime_panel(distinct_regimes(10), truth, 21);
    IccConfig c;
    c.lambda = 0.0;
    c.seed = 8;
    CHECK(label_accuracy(fit(data, c).labels, truth, 2) >= 0.9);
}

TEST_CASE("large penalty freezes labels") {
    const auto truth = block_labels(300, 2, 20, 80, 31);
    const Eigen::MatrixXd data = gaussian_regime_panel(distinct_regimes(6), truth, 32);
    IccConfig c;
    c.lambda = 1e3;
    const RegimeAssignment r = fit(data, c);
    CHECK(r.n_switches == 0);
    CHECK(std::all_of(r.labels.begin(), r.labels.end(), [&](int l) { return l == r.labels[0]; }));
}

TEST_CASE("single regime panel") {
    GaussianRegime g;
    g.mean = Eigen::VectorXd::Zero(6);
    g.covariance = Eigen::MatrixXd::Identity(6, 6);
    const std::vector<int> zeros(300, 0);
    const Eigen::MatrixXd data = gaussian_regime_panel({g}, zeros, 41);
    IccConfig c;
    c.lambda = 0.0;
    const RegimeAssignment r = fit(data, c);
    CHECK(r.n_switches == count_switches(r.labels));
    CHECK(r.labels.size() == 300);
}

TEST_CASE("too few timestamps") {
    const Eigen::MatrixXd data = Eigen::MatrixXd::Random(4, 30);
    CHECK_THROWS_AS(fit(data, IccConfig{}), DataError);
    Eigen::MatrixXd nan = Eigen::MatrixXd::Random(4, 100);
    nan(1, 5) = std::nan("");
    CHECK_THROWS_AS(fit(nan, IccConfig{}), DataError);
}

TEST_CASE("anneal_lambda") {
    std::vector<double> tried;
    int calls = 0;
    const auto r = anneal_lambda(
        0.5, 0.75, 1e-6,
        [&](double lambda) -> std::optional<RegimeAssignment> {
            if (++calls < 3) return std::nullopt;
            RegimeAssignment a;
            a.lambda_used = lambda;
            return a;
        },
        &tried);
    REQUIRE(r.has_value());
    REQUIRE(tried.size() == 3);
    CHECK(tried[0] == 0.5);
    CHECK(tried[1] == 0.375);
    CHECK(tried[2] == 0.28125);
    CHECK(r->lambda_used == 0.28125);

    tried.clear();
    const auto none = anneal_lambda(
        0.5, 0.5, 0.1, [](double) { return std::optional<RegimeAssignment>{}; }, &tried);
    CHECK_FALSE(none.has_value());
    CHECK(tried == std::vector<double>{0.5, 0.25, 0.125});
}

TEST_CASE("fit_with_annealing") {
    const auto truth = block_labels(400, 2, 20, 80, 51);
    const Eigen::MatrixXd data = gaussian_regime_panel(distinct_regimes(10), truth, 52);
    IccConfig c;
    c.seed = 53;
    const RegimeAssignment r = fit_with_annealing(data, c);
    CHECK(r.lambda_used == 0.5);
    CHECK(r.lambda_attempts == std::vector<double>{0.5});
    CHECK(is_clustered(r, c, 10));
    CHECK(label_accuracy(r.labels, truth, 2) >= 0.9);

    IccConfig zero = c;
    zero.lambda = 0.0;
    const RegimeAssignment z = fit_with_annealing(data, zero);
    CHECK(z.lambda_used == 0.0);
    CHECK(z.labels == fit(data, zero).labels);

    // a penalty that wipes out one regime anneals down
    IccConfig huge = c;
    huge.lambda = 1e3;
    huge.lambda_decay = 0.1;
    const RegimeAssignment h = fit_with_annealing(data, huge);
    CHECK(h.lambda_attempts.size() > 1);
    CHECK(h.lambda_used < 1e3);
    CHECK(has_populated_clusters(h, huge, 10));
}

TEST_CASE("fit_with_annealing rejects a single regime") {
    GaussianRegime g;
    g.mean = Eigen::VectorXd::Zero(6);
    g.covariance = distinct_regimes(6)[0].covariance;
    const Eigen::MatrixXd data = gaussian_regime_panel({g}, std::vector<int>(400, 0), 61);
    IccConfig c;
    try {
        fit_with_annealing(data, c);
        FAIL("expected DataError");
    } catch (const DataError& e) {
        CHECK(std::string(e.what()) == "data cannot be clustered into 2 regimes");
    }
}

TEST_CASE("clustered predicates") {
    RegimeAssignment r;
    IccConfig c;
    c.min_cluster_size = 3;
    r.labels = {0, 0, 0, 1, 1, 1};
    r.cluster_sizes = {3, 3};
    r.n_switches = 1;
    CHECK(has_populated_clusters(r, c, 2));
    CHECK(is_clustered(r, c, 2));
    r.labels = {0, 1, 0, 1, 0, 1};
    r.n_switches = 5; // random labels of these sizes switch 2.5 times on average
    CHECK(has_populated_clusters(r, c, 2));
    CHECK_FALSE(is_clustered(r, c, 2));
    r.cluster_sizes = {4, 2};
    CHECK_FALSE(has_populated_clusters(r, c, 2));
    r.cluster_sizes = {6};
    CHECK_FALSE(has_populated_clusters(r, c, 2));
}

TEST_CASE("canonical labels and relabel invariance") {
    const auto truth = block_labels(300, 2, 20, 80, 71);
    auto regimes = distinct_regimes(6);
    regimes[1].mean = Eigen::VectorXd::Constant(6, 1.0);
    const Eigen::MatrixXd data = gaussian_regime_panel(regimes, truth, 72);
    IccConfig c;
    RegimeAssignment r = fit(data, c);
    const auto before = r.labels;
    canonicalize_labels(r);
    CHECK(r.stats[0].mean.mean() <= r.stats[1].mean.mean());
    CHECK(label_accuracy(before, r.labels, 2) == 1.0);
    CHECK(r.n_switches == count_switches(before));
    CHECK(r.cluster_sizes[0] == static_cast<int>(std::count(r.labels.begin(), r.labels.end(), 0)));
    // the higher-mean regime (label 1 in truth) ends up as cluster 1
    CHECK(label_accuracy(r.labels, truth, 2) == doctest::Approx(static_cast<double>(std::inner_product(
                                                    r.labels.begin(), r.labels.end(), truth.begin(), 0, std::plus<>(),
                                                    [](int a, int b) { return a == b ? 1 : 0; })) /
                                                300.0));
}
