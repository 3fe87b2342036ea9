#pragma once

#include <span>
#include <string>
#include <vector>

namespace mrisvm {

double rmse(std::span<const double> residuals); // throws DataError when empty
double mae(std::span<const double> residuals);

// Linear interpolation between order statistics (h = (n - 1) p).
double percentile(std::span<const double> values, double p);

struct ErrorSummary {
    std::string function; // e.g. "eta2", "eta2_1"
    double mean = 0.0;
    double pctile5 = 0.0;
    double pctile95 = 0.0;
    double spread = 0.0;
    std::size_t n = 0;
};

ErrorSummary summarize_group(const std::string& name, std::span<const double> errors);

struct ErrorGroup {
    std::string function;
    std::vector<double> errors; // one value per window
};

std::vector<ErrorSummary> summarize(const std::vector<ErrorGroup>& groups);

// Table-style rendering: func,Mean,Pctile[5],Pctile[95],Diff Pctile[95]-[5]
std::string format_summary_table(const std::vector<ErrorSummary>& rows, int digits = 2);

struct ComparisonEntry {
    std::string function;   // base name, e.g. "eta2"
    std::string cluster_id; // e.g. "eta2_1"
    double unclustered_mean = 0.0;
    double clustered_mean = 0.0;
    double unclustered_spread = 0.0;
    double clustered_spread = 0.0;
    bool mean_not_worse = false; // clustered <= unclustered
    bool mean_improved = false;  // strictly lower
    bool mean_regressed = false; // strictly higher
    bool spread_reduced = false; // strictly lower
};

struct ComparisonReport {
    std::vector<ComparisonEntry> entries;
    int improvements = 0;
    int regressions = 0;
    double improvement_fraction = 0.0;
    bool any_spread_reduced = false;
};

// Clustered summaries are matched to the unclustered one by the prefix before
// the last '_' ("eta2_2" -> "eta2"). Throws DataError when a clustered function
// has no unclustered counterpart or vice versa.
ComparisonReport compare_clustered(const std::vector<ErrorSummary>& unclustered,
                                   const std::vector<ErrorSummary>& clustered);

// Best accuracy over all relabelings of predicted (exhaustive, k <= 8).
double label_accuracy(std::span<const int> predicted, std::span<const int> truth, int k);

} // namespace mrisvm
