#include "mrisvm/icc.hpp"

#include "mrisvm/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <random>

namespace mrisvm {

void IccConfig::validate() const {
    if (k < 1) throw ConfigError("icc: k must be at least 1");
    if (max_iterations < 1) throw ConfigError("icc: max_iterations must be at least 1");
    if (!(lambda_decay > 0.0 && lambda_decay < 1.0)) throw ConfigError("icc: lambda_decay must lie in (0, 1)");
    if (!std::isfinite(lambda)) throw ConfigError("icc: lambda must be finite");
    if (min_cluster_size < 0) throw ConfigError("icc: min_cluster_size must be non-negative");
    if (!(lambda_floor > 0.0)) throw ConfigError("icc: lambda_floor must be positive");
    if (!(max_switch_ratio > 0.0)) throw ConfigError("icc: max_switch_ratio must be positive");
    if (n_restarts < 1) throw ConfigError("icc: n_restarts must be at least 1");
}

int IccConfig::effective_min_cluster_size(std::size_t n_assets) const {
    if (min_cluster_size > 0) return min_cluster_size;
    return std::max(static_cast<int>(n_assets) + 1, 25);
}

double gain_euclidean(const Eigen::VectorXd& r, const ClusterStats& stats) {
    if (r.size() != stats.mean.size()) throw ConfigError("gain_euclidean: dimension mismatch");
    return -(r - stats.mean).squaredNorm();
}

double mahalanobis_squared(const Eigen::VectorXd& r, const ClusterStats& stats) {
    if (r.size() != stats.mean.size() || stats.precision.matrix.rows() != r.size())
        throw ConfigError("mahalanobis: dimension mismatch");
    const Eigen::VectorXd diff = r - stats.mean;
    return diff.dot(stats.precision.matrix * diff);
}

double gain_gaussian(const Eigen::VectorXd& r, const ClusterStats& stats, bool factor_n) {
    const double factor = factor_n ? static_cast<double>(r.size()) : 1.0;
    const double ld = log_det(stats.precision);
    return 0.5 * ld - factor * mahalanobis_squared(r, stats) / 2.0;
}

double penalized_gain(double gain, int current, std::optional<int> previous, double lambda) {
    if (previous && *previous != current) return gain - lambda;
    return gain;
}

int count_switches(const std::vector<int>& labels) {
    int n = 0;
    for (std::size_t t = 1; t < labels.size(); ++t) n += labels[t] != labels[t - 1];
    return n;
}

namespace {

Eigen::MatrixXd select_columns(const Eigen::MatrixXd& data, const std::vector<int>& columns) {
    Eigen::MatrixXd out(data.rows(), static_cast<Eigen::Index>(columns.size()));
    for (std::size_t i = 0; i < columns.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = data.col(columns[i]);
    return out;
}

SparsePrecision precision_for(const Eigen::MatrixXd& cov, const Eigen::MatrixXd& similarity) {
    const Eigen::Index n = cov.rows();
    if (n >= 3) return logo_precision(cov, build_tmfg(similarity));
    // One or two assets: the filtered graph is complete anyway.
    SparsePrecision p;
    Eigen::MatrixXd c = cov;
    Eigen::LLT<Eigen::MatrixXd> llt(c);
    if (llt.info() != Eigen::Success) {
        c.diagonal().array() += 1e-8 * c.trace() / static_cast<double>(n);
        llt.compute(c);
        if (llt.info() != Eigen::Success) throw NumericalError("cluster covariance is singular");
        p.ridge_applied = true;
    }
    p.matrix = llt.solve(Eigen::MatrixXd::Identity(n, n));
    if (n == 2) p.support.insert({0, 1});
    return p;
}

// Gain of every (cluster, time) pair under fixed statistics.
Eigen::MatrixXd gain_table(const Eigen::MatrixXd& data, const std::vector<ClusterStats>& stats,
                           const IccConfig& config) {
    const Eigen::Index k = static_cast<Eigen::Index>(stats.size());
    const Eigen::Index n = data.rows();
    Eigen::MatrixXd g(k, data.cols());
    const double factor = config.factor_n_gain ? static_cast<double>(n) : 1.0;
    for (Eigen::Index c = 0; c < k; ++c) {
        const ClusterStats& s = stats[static_cast<std::size_t>(c)];
        const Eigen::MatrixXd diff = data.colwise() - s.mean;
        if (config.gain_kind == GainKind::Euclidean) {
            g.row(c) = -diff.colwise().squaredNorm();
        } else {
            const Eigen::MatrixXd pd = s.precision.matrix * diff;
            const Eigen::RowVectorXd d2 = (diff.array() * pd.array()).colwise().sum();
            g.row(c) = (0.5 * s.log_det - factor * d2.array() / 2.0).matrix();
        }
    }
    return g;
}

std::vector<int> sweep_table(const Eigen::MatrixXd& g, double lambda, std::vector<double>* gains) {
    const Eigen::Index k = g.rows();
    std::vector<int> labels(static_cast<std::size_t>(g.cols()));
    if (gains) gains->assign(labels.size(), 0.0);
    std::optional<int> previous;
    for (Eigen::Index t = 0; t < g.cols(); ++t) {
        int best = 0;
        double best_value = -std::numeric_limits<double>::infinity();
        for (Eigen::Index c = 0; c < k; ++c) {
            const double value = penalized_gain(g(c, t), static_cast<int>(c), previous, lambda);
            if (value > best_value) {
                best_value = value;
                best = static_cast<int>(c);
            }
        }
        labels[static_cast<std::size_t>(t)] = best;
        if (gains) (*gains)[static_cast<std::size_t>(t)] = g(best, t);
        previous = best;
    }
    return labels;
}

std::vector<int> cluster_sizes(const std::vector<int>& labels, int k) {
    std::vector<int> sizes(static_cast<std::size_t>(k), 0);
    for (int l : labels) ++sizes[static_cast<std::size_t>(l)];
    return sizes;
}

// Moves the lowest-gain points of clusters that can spare them into clusters
// below min_size. Returns the number of points moved.
int repair_clusters(std::vector<int>& labels, int k, int min_size, const std::vector<double>& gains) {
    auto sizes = cluster_sizes(labels, k);
    std::vector<std::size_t> order(labels.size());
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return gains[a] < gains[b]; });
    int moved = 0;
    for (int e = 0; e < k; ++e) {
        for (std::size_t idx = 0; idx < order.size() && sizes[static_cast<std::size_t>(e)] < min_size; ++idx) {
            const std::size_t t = order[idx];
            const int from = labels[t];
            if (from == e || sizes[static_cast<std::size_t>(from)] <= min_size) continue;
            labels[t] = e;
            --sizes[static_cast<std::size_t>(from)];
            ++sizes[static_cast<std::size_t>(e)];
            ++moved;
        }
    }
    return moved;
}

} // namespace

ClusterStats cluster_statistics(const Eigen::MatrixXd& data, const std::vector<int>& columns) {
    if (columns.size() < 2) throw DataError("cluster_statistics: need at least two members");
    const Eigen::MatrixXd x = select_columns(data, columns);
    ClusterStats s;
    s.member_count = static_cast<int>(columns.size());
    s.mean = x.rowwise().mean();
    const Eigen::MatrixXd centered = x.colwise() - s.mean;
    Eigen::MatrixXd cov = centered * centered.transpose() / static_cast<double>(columns.size());
    const Eigen::MatrixXd similarity = squared_correlation(x);
    s.precision = precision_for(cov, similarity);
    try {
        s.log_det = log_det(s.precision);
    } catch (const NumericalError&) {
        cov.diagonal().array() += 1e-6 * cov.trace() / static_cast<double>(cov.rows());
        s.precision = precision_for(cov, similarity);
        s.precision.ridge_applied = true;
        s.log_det = log_det(s.precision);
    }
    return s;
}

std::vector<int> assignment_sweep(const Eigen::MatrixXd& data, const std::vector<ClusterStats>& stats,
                                  const IccConfig& config, std::vector<double>* gains) {
    return sweep_table(gain_table(data, stats, config), config.lambda, gains);
}

double total_penalized_gain(const Eigen::MatrixXd& data, const std::vector<ClusterStats>& stats,
                            const std::vector<int>& labels, const IccConfig& config) {
    const Eigen::MatrixXd g = gain_table(data, stats, config);
    double total = 0.0;
    std::optional<int> previous;
    for (std::size_t t = 0; t < labels.size(); ++t) {
        total += penalized_gain(g(labels[t], static_cast<Eigen::Index>(t)), labels[t], previous, config.lambda);
        previous = labels[t];
    }
    return total;
}

RegimeAssignment fit(const PanelMatrix& panel, const IccConfig& config) { return fit(panel.values, config); }

RegimeAssignment fit(const Eigen::MatrixXd& data, const IccConfig& config) {
    config.validate();
    std::optional<RegimeAssignment> best;
    for (int r = 0; r < config.n_restarts; ++r) {
        const std::uint64_t seed = r == 0 ? config.seed : config.seed + 0x9E3779B97F4A7C15ULL * static_cast<std::uint64_t>(r);
        RegimeAssignment a = fit_once(data, config, seed);
        a.restart = r;
        if (!best || a.objective > best->objective) best = std::move(a);
    }
    return std::move(*best);
}

RegimeAssignment fit_once(const Eigen::MatrixXd& data, const IccConfig& config, std::uint64_t seed) {
    config.validate();
    if (!data.allFinite()) throw DataError("icc: panel contains missing or non-finite values");
    const int k = config.k;
    const auto n_times = static_cast<std::size_t>(data.cols());
    const int min_size = config.effective_min_cluster_size(static_cast<std::size_t>(data.rows()));
    if (n_times < static_cast<std::size_t>(k) * static_cast<std::size_t>(std::max(min_size, 2)))
        throw DataError("icc: too few timestamps for " + std::to_string(k) + " clusters of " +
                        std::to_string(min_size));

    RegimeAssignment result;
    result.lambda_used = config.lambda;
    std::mt19937_64 rng(seed);
    std::uniform_int_distribution<int> pick(0, k - 1);
    std::vector<int> labels(n_times);
    for (auto& l : labels) l = pick(rng);

    std::vector<double> gains;
    std::vector<ClusterStats> stats;
    for (int iter = 1; iter <= config.max_iterations; ++iter) {
        result.iterations_used = iter;
        std::vector<int> membership = labels;
        const auto sizes = cluster_sizes(membership, k);
        if (std::any_of(sizes.begin(), sizes.end(), [&](int s) { return s < min_size; })) {
            if (gains.empty()) {
                // No sweep yet: rank points by distance to their own cluster mean.
                gains.assign(n_times, 0.0);
                for (int c = 0; c < k; ++c) {
                    std::vector<int> cols;
                    for (std::size_t t = 0; t < n_times; ++t)
                        if (membership[t] == c) cols.push_back(static_cast<int>(t));
                    if (cols.empty()) continue;
                    Eigen::VectorXd mean = Eigen::VectorXd::Zero(data.rows());
                    for (int t : cols) mean += data.col(t);
                    mean /= static_cast<double>(cols.size());
                    for (int t : cols) gains[static_cast<std::size_t>(t)] = -(data.col(t) - mean).squaredNorm();
                }
            }
            repair_clusters(membership, k, min_size, gains);
            ++result.repairs;
        }

        stats.clear();
        for (int c = 0; c < k; ++c) {
            std::vector<int> cols;
            for (std::size_t t = 0; t < n_times; ++t)
                if (membership[t] == c) cols.push_back(static_cast<int>(t));
            stats.push_back(cluster_statistics(data, cols));
        }

        std::vector<int> next = assignment_sweep(data, stats, config, &gains);
        const bool unchanged = next == labels;
        labels = std::move(next);
        if (unchanged) {
            result.converged = true;
            break;
        }
    }

    result.labels = std::move(labels);
    result.stats = std::move(stats);
    result.cluster_sizes = cluster_sizes(result.labels, k);
    result.n_switches = count_switches(result.labels);
    result.objective = total_penalized_gain(data, result.stats, result.labels, config);
    return result;
}

bool has_populated_clusters(const RegimeAssignment& result, const IccConfig& config, std::size_t n_assets) {
    const int min_size = config.effective_min_cluster_size(n_assets);
    if (result.cluster_sizes.size() != static_cast<std::size_t>(config.k)) return false;
    for (int s : result.cluster_sizes)
        if (s < min_size) return false;
    return true;
}

bool is_clustered(const RegimeAssignment& result, const IccConfig& config, std::size_t n_assets) {
    if (!has_populated_clusters(result, config, n_assets)) return false;
    const double n = static_cast<double>(result.labels.size());
    if (n < 2) return false;
    double concentration = 0.0;
    for (int s : result.cluster_sizes) concentration += (s / n) * (s / n);
    const double random_switches = (n - 1.0) * (1.0 - concentration);
    return result.n_switches <= config.max_switch_ratio * random_switches;
}

std::optional<RegimeAssignment> anneal_lambda(double lambda0, double decay, double floor, const LambdaAttempt& attempt,
                                              std::vector<double>* attempted) {
    for (double lambda = lambda0; std::abs(lambda) >= floor; lambda *= decay) {
        if (attempted) attempted->push_back(lambda);
        if (auto result = attempt(lambda)) return result;
    }
    return std::nullopt;
}

RegimeAssignment fit_with_annealing(const PanelMatrix& panel, const IccConfig& config) {
    return fit_with_annealing(panel.values, config);
}

RegimeAssignment fit_with_annealing(const Eigen::MatrixXd& data, const IccConfig& config) {
    config.validate();
    const auto n_assets = static_cast<std::size_t>(data.rows());
    IccConfig base = config;
    base.lambda = 0.0;
    RegimeAssignment unpenalized = fit(data, base);
    if (!is_clustered(unpenalized, base, n_assets))
        throw DataError("data cannot be clustered into " + std::to_string(config.k) + " regimes");
    if (config.lambda == 0.0) {
        unpenalized.lambda_attempts = {0.0};
        return unpenalized;
    }

    std::vector<double> attempted;
    auto result = anneal_lambda(
        config.lambda, config.lambda_decay, config.lambda_floor,
        [&](double lambda) -> std::optional<RegimeAssignment> {
            IccConfig c = config;
            c.lambda = lambda;
            RegimeAssignment r = fit(data, c);
            if (is_clustered(r, c, n_assets)) return r;
            return std::nullopt;
        },
        &attempted);
    RegimeAssignment chosen = result ? std::move(*result) : std::move(unpenalized);
    if (!result) chosen.lambda_used = 0.0;
    chosen.lambda_attempts = std::move(attempted);
    return chosen;
}

void canonicalize_labels(RegimeAssignment& result) {
    const std::size_t k = result.stats.size();
    std::vector<int> order(k);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
        return result.stats[static_cast<std::size_t>(a)].mean.mean() < result.stats[static_cast<std::size_t>(b)].mean.mean();
    });
    std::vector<int> new_id(k);
    for (std::size_t i = 0; i < k; ++i) new_id[static_cast<std::size_t>(order[i])] = static_cast<int>(i);
    for (auto& l : result.labels) l = new_id[static_cast<std::size_t>(l)];
    std::vector<ClusterStats> stats(k);
    std::vector<int> sizes(k);
    for (std::size_t c = 0; c < k; ++c) {
        stats[static_cast<std::size_t>(new_id[c])] = std::move(result.stats[c]);
        sizes[static_cast<std::size_t>(new_id[c])] = result.cluster_sizes[c];
    }
    result.stats = std::move(stats);
    result.cluster_sizes = std::move(sizes);
}

} // namespace mrisvm
