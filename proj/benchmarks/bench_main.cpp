#include "mrisvm/black_scholes.hpp"
#include "mrisvm/filtering_network.hpp"
#include "mrisvm/icc.hpp"
#include "mrisvm/isvm.hpp"
#include "mrisvm/surface.hpp"
#include "mrisvm/synth.hpp"

#include <benchmark/benchmark.h>

#include <cmath>
#include <random>

using namespace mrisvm;

namespace {

Eigen::MatrixXd random_panel(int n, int t, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> z(0.0, 1.0);
    Eigen::MatrixXd f(n, 3);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < 3; ++j) f(i, j) = z(rng);
    Eigen::MatrixXd x(n, t);
    for (int c = 0; c < t; ++c) {
        Eigen::Vector3d common(z(rng), z(rng), z(rng));
        for (int i = 0; i < n; ++i) x(i, c) = f.row(i).dot(common) + z(rng);
    }
    return x;
}

std::vector<SurfaceSample> surface_samples(int n_times, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> noise(0.0, 0.002);
    std::vector<SurfaceSample> out;
    for (int t = 0; t < n_times; ++t) {
        SurfaceSample s;
        s.timestamp = Timestamp{} + std::chrono::minutes{20 * t};
        s.v = 0.5 + 0.3 * t / n_times;
        for (double days : {7.0, 14.0, 30.0, 60.0})
            for (double k : {-0.1, -0.05, 0.0, 0.05, 0.1}) {
                IvObservation o;
                o.timestamp = s.timestamp;
                o.tau = days / 365.0;
                o.k = k;
                o.iv = s.v + (0.1 - 0.2 * s.v) * o.tau / 2 + (-0.1 + 0.2 * s.v) * k / 2 + 0.3 * k * k + noise(rng);
                s.obs.push_back(o);
            }
        out.push_back(std::move(s));
    }
    return out;
}

void BM_Tmfg(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const Eigen::MatrixXd sim = squared_correlation(random_panel(n, 4 * n, 1));
    for (auto _ : state) benchmark::DoNotOptimize(build_tmfg(sim));
}
BENCHMARK(BM_Tmfg)->Arg(10)->Arg(25)->Arg(50)->Arg(100);

void BM_LogoPrecision(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const Eigen::MatrixXd x = random_panel(n, 4 * n, 2);
    const Eigen::MatrixXd centered = x.colwise() - x.rowwise().mean();
    const Eigen::MatrixXd cov = centered * centered.transpose() / (x.cols() - 1);
    const TmfgGraph g = build_tmfg(squared_correlation(x));
    for (auto _ : state) benchmark::DoNotOptimize(logo_precision(cov, g));
}
BENCHMARK(BM_LogoPrecision)->Arg(10)->Arg(25)->Arg(50)->Arg(100);

void BM_IccFit(benchmark::State& state) {
    const int n = static_cast<int>(state.range(0));
    const auto labels = block_labels(360, 2, 36, 108, 3);
    Eigen::MatrixXd cov_a = Eigen::MatrixXd::Constant(n, n, 0.3) + 0.7 * Eigen::MatrixXd::Identity(n, n);
    Eigen::MatrixXd cov_b = Eigen::MatrixXd::Constant(n, n, 0.6) + 0.4 * Eigen::MatrixXd::Identity(n, n);
    const Eigen::MatrixXd x = gaussian_regime_panel(
        {{Eigen::VectorXd::Zero(n), cov_a}, {Eigen::VectorXd::Constant(n, 0.8), cov_b}}, labels, 4);
    IccConfig c;
    for (auto _ : state) benchmark::DoNotOptimize(fit(x, c));
}
BENCHMARK(BM_IccFit)->Arg(10)->Arg(25)->Unit(benchmark::kMillisecond);

void BM_SurfaceFit(benchmark::State& state) {
    const auto samples = surface_samples(1, 5);
    for (auto _ : state) benchmark::DoNotOptimize(fit_surface(samples[0].obs));
}
BENCHMARK(BM_SurfaceFit);

void BM_Bootstrap(benchmark::State& state) {
    const auto samples = surface_samples(180, 6);
    IsvmConfig c;
    c.bootstrap_samples = static_cast<int>(state.range(0));
    c.seed = 7;
    for (auto _ : state) benchmark::DoNotOptimize(fit_cluster(0, samples, c));
}
BENCHMARK(BM_Bootstrap)->Arg(50)->Arg(500)->Unit(benchmark::kMillisecond);

void BM_ImpliedVol(benchmark::State& state) {
    const double price = bs_price(100, 110, 0.1, 0.01, 0.0, 0.6, OptionKind::Call);
    for (auto _ : state) benchmark::DoNotOptimize(implied_vol(price, 100, 110, 0.1, 0.01, 0.0, OptionKind::Call));
}
BENCHMARK(BM_ImpliedVol);

} // namespace

BENCHMARK_MAIN();
