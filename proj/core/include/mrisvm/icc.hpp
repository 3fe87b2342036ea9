#pragma once

#include "mrisvm/filtering_network.hpp"
#include "mrisvm/market_data.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

namespace mrisvm {

enum class GainKind { Euclidean, GaussianLikelihood };

struct IccConfig {
    int k = 2;
    double lambda = 0.5;
    GainKind gain_kind = GainKind::GaussianLikelihood;
    // Keep the factor n on the Mahalanobis term of the likelihood gain.
    // false gives the textbook 0.5 * logdet - 0.5 * d^2.
    bool factor_n_gain = false;
    int max_iterations = 100;
    // Independent random initialisations; the one with the largest total
    // penalized gain is kept. Restart r > 0 uses a seed derived from seed and r.
    int n_restarts = 10;
    std::uint64_t seed = 0;
    // 0 means max(n_assets + 1, 25).
    int min_cluster_size = 0;
    double lambda_decay = 0.75;
    // Annealing gives up on the target penalty once it drops below this.
    double lambda_floor = 1e-6;
    // A fit is degenerate when its switch count exceeds this fraction of the
    // switches expected from random labels with the same cluster sizes.
    double max_switch_ratio = 0.75;

    void validate() const; // throws ConfigError
    int effective_min_cluster_size(std::size_t n_assets) const;
};

struct ClusterStats {
    Eigen::VectorXd mean;
    SparsePrecision precision;
    double log_det = 0.0;
    int member_count = 0;
};

struct RegimeAssignment {
    std::vector<int> labels;
    std::vector<ClusterStats> stats;
    std::vector<int> cluster_sizes; // from labels
    int n_switches = 0;
    bool converged = false;
    int iterations_used = 0;
    int repairs = 0;
    double lambda_used = 0.0;
    std::vector<double> lambda_attempts;
    double objective = 0.0; // total penalized gain of labels under stats
    int restart = 0;        // index of the winning initialisation
};

// -(r - mu).(r - mu)
double gain_euclidean(const Eigen::VectorXd& r, const ClusterStats& stats);

// 0.5 * ln|P| - factor * d^2 / 2 with d^2 = (r - mu)' P (r - mu); factor = n
// when factor_n, 1 otherwise. Throws NumericalError for a non-PD precision.
double gain_gaussian(const Eigen::VectorXd& r, const ClusterStats& stats, bool factor_n = true);

double mahalanobis_squared(const Eigen::VectorXd& r, const ClusterStats& stats);

// G - lambda when the label changes; no penalty at t = 0.
double penalized_gain(double gain, int current, std::optional<int> previous, double lambda);

int count_switches(const std::vector<int>& labels);

// Mean, biased covariance, TMFG on squared correlations and LoGo precision of
// the given columns of data.
ClusterStats cluster_statistics(const Eigen::MatrixXd& data, const std::vector<int>& columns);

// Sequential assignment sweep under fixed statistics.
std::vector<int> assignment_sweep(const Eigen::MatrixXd& data, const std::vector<ClusterStats>& stats,
                                  const IccConfig& config, std::vector<double>* gains = nullptr);

// Sum over t of the penalized gain of labels[t] given labels[t - 1].
double total_penalized_gain(const Eigen::MatrixXd& data, const std::vector<ClusterStats>& stats,
                            const std::vector<int>& labels, const IccConfig& config);

// ICC on the columns of panel.values (one column per timestamp), best of
// n_restarts random initialisations.
RegimeAssignment fit(const PanelMatrix& panel, const IccConfig& config);
RegimeAssignment fit(const Eigen::MatrixXd& data, const IccConfig& config);

// A single run from the initialisation seeded by `seed`.
RegimeAssignment fit_once(const Eigen::MatrixXd& data, const IccConfig& config, std::uint64_t seed);

// Every cluster of the final labels has at least min_cluster_size members.
bool has_populated_clusters(const RegimeAssignment& result, const IccConfig& config, std::size_t n_assets);

// True when every cluster of the final labels has min_cluster_size members and
// the switch count is at most max_switch_ratio * (T - 1) * (1 - sum p_k^2).
bool is_clustered(const RegimeAssignment& result, const IccConfig& config, std::size_t n_assets);

// Runs attempt(lambda) for lambda, lambda * decay, ... while the attempt
// reports failure and lambda >= floor. Returns the first success or nullopt.
using LambdaAttempt = std::function<std::optional<RegimeAssignment>(double)>;
std::optional<RegimeAssignment> anneal_lambda(double lambda0, double decay, double floor,
                                              const LambdaAttempt& attempt,
                                              std::vector<double>* attempted = nullptr);

// Verifies a lambda = 0 fit clusters the data (DataError otherwise), then
// anneals the target lambda. Falls back to the lambda = 0 fit.
RegimeAssignment fit_with_annealing(const PanelMatrix& panel, const IccConfig& config);
RegimeAssignment fit_with_annealing(const Eigen::MatrixXd& data, const IccConfig& config);

// Relabels clusters by ascending mean level (average of the cluster mean vector)
// so that cluster ids are comparable across windows.
void canonicalize_labels(RegimeAssignment& result);

} // namespace mrisvm
