#include "mrisvm/eval.hpp"

#include "mrisvm/errors.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <set>
#include <sstream>

namespace mrisvm {

double rmse(std::span<const double> residuals) {
    if (residuals.empty()) throw DataError("rmse: empty residual list");
    double ss = 0.0;
    for (double r : residuals) ss += r * r;
    return std::sqrt(ss / static_cast<double>(residuals.size()));
}

double mae(std::span<const double> residuals) {
    if (residuals.empty()) throw DataError("mae: empty residual list");
    double s = 0.0;
    for (double r : residuals) s += std::abs(r);
    return s / static_cast<double>(residuals.size());
}

double percentile(std::span<const double> values, double p) {
    if (values.empty()) throw DataError("percentile: empty input");
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError("percentile: p must lie in [0, 1]");
    std::vector<double> v(values.begin(), values.end());
    std::sort(v.begin(), v.end());
    const double h = static_cast<double>(v.size() - 1) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, v.size() - 1);
    return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
}

ErrorSummary summarize_group(const std::string& name, std::span<const double> errors) {
    if (errors.empty()) throw DataError("summarize: empty error group '" + name + "'");
    ErrorSummary s;
    s.function = name;
    s.n = errors.size();
    std::vector<double> sorted(errors.begin(), errors.end());
    std::sort(sorted.begin(), sorted.end());
    // sorted summation keeps the mean independent of input order
    s.mean = std::accumulate(sorted.begin(), sorted.end(), 0.0) / static_cast<double>(sorted.size());
    s.pctile5 = percentile(sorted, 0.05);
    s.pctile95 = percentile(sorted, 0.95);
    s.spread = s.pctile95 - s.pctile5;
    return s;
}

std::vector<ErrorSummary> summarize(const std::vector<ErrorGroup>& groups) {
    std::vector<ErrorSummary> out;
    out.reserve(groups.size());
    for (const auto& g : groups) out.push_back(summarize_group(g.function, g.errors));
    return out;
}

std::string format_summary_table(const std::vector<ErrorSummary>& rows, int digits) {
    std::ostringstream os;
    os << "func,Mean,Pctile[5],Pctile[95],Diff Pctile[95]-[5]\n";
    char buf[64];
    auto fmt = [&](double x) {
        std::snprintf(buf, sizeof buf, "%.*f", digits, x);
        return std::string(buf);
    };
    for (const auto& r : rows) {
        os << r.function << ',' << fmt(r.mean) << ',' << fmt(r.pctile5) << ',' << fmt(r.pctile95) << ','
           << fmt(r.spread) << '\n';
    }
    return os.str();
}

namespace {

std::string base_name(const std::string& name) {
    const auto pos = name.rfind('_');
    return pos == std::string::npos ? name : name.substr(0, pos);
}

} // namespace

ComparisonReport compare_clustered(const std::vector<ErrorSummary>& unclustered,
                                   const std::vector<ErrorSummary>& clustered) {
    std::map<std::string, const ErrorSummary*> base;
    for (const auto& u : unclustered) {
        if (!base.emplace(u.function, &u).second)
            throw DataError("compare_clustered: duplicate unclustered function '" + u.function + "'");
    }
    ComparisonReport report;
    std::set<std::string> seen;
    for (const auto& c : clustered) {
        const std::string b = base_name(c.function);
        auto it = base.find(b);
        if (it == base.end()) throw DataError("compare_clustered: no unclustered summary for '" + c.function + "'");
        seen.insert(b);
        const ErrorSummary& u = *it->second;
        ComparisonEntry e;
        e.function = b;
        e.cluster_id = c.function;
        e.unclustered_mean = u.mean;
        e.clustered_mean = c.mean;
        e.unclustered_spread = u.spread;
        e.clustered_spread = c.spread;
        e.mean_not_worse = c.mean <= u.mean;
        e.mean_improved = c.mean < u.mean;
        e.mean_regressed = c.mean > u.mean;
        e.spread_reduced = c.spread < u.spread;
        report.improvements += e.mean_improved ? 1 : 0;
        report.regressions += e.mean_regressed ? 1 : 0;
        report.any_spread_reduced = report.any_spread_reduced || e.spread_reduced;
        report.entries.push_back(std::move(e));
    }
    for (const auto& [name, _] : base) {
        if (!seen.count(name)) throw DataError("compare_clustered: no clustered summary for '" + name + "'");
    }
    if (!report.entries.empty())
        report.improvement_fraction = static_cast<double>(report.improvements) / static_cast<double>(report.entries.size());
    return report;
}

double label_accuracy(std::span<const int> predicted, std::span<const int> truth, int k) {
    if (predicted.size() != truth.size()) throw DataError("label_accuracy: length mismatch");
    if (k < 1 || k > 8) throw ConfigError("label_accuracy: k must lie in [1, 8]");
    if (predicted.empty()) throw DataError("label_accuracy: empty labels");
    // confusion[p][t]
    std::vector<std::vector<std::size_t>> confusion(static_cast<std::size_t>(k), std::vector<std::size_t>(static_cast<std::size_t>(k), 0));
    for (std::size_t i = 0; i < predicted.size(); ++i) {
        if (predicted[i] < 0 || predicted[i] >= k || truth[i] < 0 || truth[i] >= k)
            throw DataError("label_accuracy: label out of range");
        ++confusion[static_cast<std::size_t>(predicted[i])][static_cast<std::size_t>(truth[i])];
    }
    std::vector<int> perm(static_cast<std::size_t>(k));
    std::iota(perm.begin(), perm.end(), 0);
    std::size_t best = 0;
    do {
        std::size_t hits = 0;
        for (int p = 0; p < k; ++p) hits += confusion[static_cast<std::size_t>(p)][static_cast<std::size_t>(perm[static_cast<std::size_t>(p)])];
        best = std::max(best, hits);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return static_cast<double>(best) / static_cast<double>(predicted.size());
}

} // namespace mrisvm
