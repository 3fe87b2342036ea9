#include "mrisvm/filtering_network.hpp"

#include "mrisvm/errors.hpp"
#include "mrisvm/table_io.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <fstream>
#include <optional>
#include <string>

namespace mrisvm {

namespace {

Edge make_edge(int a, int b) { return a < b ? Edge{a, b} : Edge{b, a}; }

template <std::size_t N>
std::string describe(const std::array<int, N>& vertices) {
    std::string s = "{";
    for (std::size_t i = 0; i < N; ++i) s += (i ? "," : "") + std::to_string(vertices[i]);
    return s + "}";
}

// Inverse of the principal submatrix on `index`, or nullopt when it is not
// numerically positive definite.
template <std::size_t N>
std::optional<Eigen::MatrixXd> sub_inverse(const Eigen::MatrixXd& cov, const std::array<int, N>& index) {
    Eigen::MatrixXd sub(N, N);
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = 0; j < N; ++j) sub(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = cov(index[i], index[j]);
    Eigen::LLT<Eigen::MatrixXd> llt(sub);
    if (llt.info() != Eigen::Success) return std::nullopt;
    const double max_diag = sub.diagonal().maxCoeff();
    const Eigen::VectorXd l = llt.matrixLLT().diagonal();
    if (!(max_diag > 0.0) || l.minCoeff() * l.minCoeff() < 1e-13 * max_diag) return std::nullopt;
    return llt.solve(Eigen::MatrixXd::Identity(N, N));
}

template <std::size_t N>
void embed(Eigen::MatrixXd& target, const Eigen::MatrixXd& block, const std::array<int, N>& index, double sign) {
    for (std::size_t i = 0; i < N; ++i)
        for (std::size_t j = 0; j < N; ++j)
            target(index[i], index[j]) += sign * block(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
}

void check_square_finite(const Eigen::MatrixXd& m, const char* what) {
    if (m.rows() != m.cols()) throw ConfigError(std::string(what) + ": matrix must be square");
    if (!m.allFinite()) throw ConfigError(std::string(what) + ": matrix has non-finite entries");
}

} // namespace

bool TmfgGraph::has_edge(int a, int b) const { return edges.count(make_edge(a, b)) > 0; }

TmfgGraph build_tmfg(const Eigen::MatrixXd& w) {
    check_square_finite(w, "build_tmfg");
    const int n = static_cast<int>(w.rows());
    if (n < 3) throw ConfigError("build_tmfg: need at least 3 vertices");
    if ((w - w.transpose()).cwiseAbs().maxCoeff() > 1e-12 * std::max(1.0, w.cwiseAbs().maxCoeff()))
        throw ConfigError("build_tmfg: similarity matrix must be symmetric");

    TmfgGraph g;
    g.n = n;
    if (n == 3) {
        g.edges = {{0, 1}, {0, 2}, {1, 2}};
        return g;
    }

    // Seed: 4-clique with the largest total weight, first in lexicographic order on ties.
    Clique4 seed{0, 1, 2, 3};
    double best = -std::numeric_limits<double>::infinity();
    for (int a = 0; a < n; ++a)
        for (int b = a + 1; b < n; ++b)
            for (int c = b + 1; c < n; ++c) {
                const double abc = w(a, b) + w(a, c) + w(b, c);
                for (int d = c + 1; d < n; ++d) {
                    const double total = abc + w(a, d) + w(b, d) + w(c, d);
                    if (total > best) {
                        best = total;
                        seed = {a, b, c, d};
                    }
                }
            }

    g.cliques.push_back(seed);
    for (int i = 0; i < 4; ++i)
        for (int j = i + 1; j < 4; ++j) g.edges.insert(make_edge(seed[i], seed[j]));

    const auto [a, b, c, d] = seed;
    std::vector<Triangle> faces{{a, b, c}, {a, b, d}, {a, c, d}, {b, c, d}};
    std::vector<bool> inserted(static_cast<std::size_t>(n), false);
    for (int v : seed) inserted[static_cast<std::size_t>(v)] = true;

    for (int step = 4; step < n; ++step) {
        int best_v = -1;
        std::size_t best_f = 0;
        double best_gain = -std::numeric_limits<double>::infinity();
        for (int v = 0; v < n; ++v) {
            if (inserted[static_cast<std::size_t>(v)]) continue;
            for (std::size_t f = 0; f < faces.size(); ++f) {
                const auto& t = faces[f];
                const double gain = w(v, t[0]) + w(v, t[1]) + w(v, t[2]);
                if (gain > best_gain) {
                    best_gain = gain;
                    best_v = v;
                    best_f = f;
                }
            }
        }
        const Triangle face = faces[best_f];
        inserted[static_cast<std::size_t>(best_v)] = true;
        for (int u : face) g.edges.insert(make_edge(best_v, u));
        g.cliques.push_back({face[0], face[1], face[2], best_v});
        g.separators.push_back(face);
        faces[best_f] = {face[0], face[1], best_v};
        faces.push_back({face[1], face[2], best_v});
        faces.push_back({face[0], face[2], best_v});
    }
    return g;
}

Eigen::MatrixXd squared_correlation(const Eigen::MatrixXd& data) {
    const Eigen::Index n = data.rows();
    const Eigen::Index m = data.cols();
    if (m < 2) throw DataError("squared_correlation: need at least two samples");
    const Eigen::MatrixXd centered = data.colwise() - data.rowwise().mean();
    const Eigen::MatrixXd cov = centered * centered.transpose() / static_cast<double>(m);
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            const double denom = cov(i, i) * cov(j, j);
            if (denom > 0.0) {
                const double rho = cov(i, j) / std::sqrt(denom);
                out(i, j) = rho * rho;
            }
        }
    }
    return out;
}

SparsePrecision logo_precision(const Eigen::MatrixXd& covariance, const TmfgGraph& graph) {
    check_square_finite(covariance, "logo_precision");
    const Eigen::Index n = covariance.rows();
    if (n != graph.n) throw ConfigError("logo_precision: graph and covariance sizes differ");

    auto attempt = [&](const Eigen::MatrixXd& cov, std::string* failed) -> std::optional<Eigen::MatrixXd> {
        Eigen::MatrixXd j = Eigen::MatrixXd::Zero(n, n);
        if (graph.cliques.empty()) {
            // n == 3: the single triangle is the whole graph.
            auto inv = sub_inverse(cov, Triangle{0, 1, 2});
            if (!inv) {
                *failed = describe(Triangle{0, 1, 2});
                return std::nullopt;
            }
            return *inv;
        }
        for (const auto& c : graph.cliques) {
            auto inv = sub_inverse(cov, c);
            if (!inv) {
                *failed = "clique " + describe(c);
                return std::nullopt;
            }
            embed(j, *inv, c, 1.0);
        }
        for (const auto& s : graph.separators) {
            auto inv = sub_inverse(cov, s);
            if (!inv) {
                *failed = "separator " + describe(s);
                return std::nullopt;
            }
            embed(j, *inv, s, -1.0);
        }
        return j;
    };

    SparsePrecision out;
    out.support = graph.edges;
    std::string failed;
    auto j = attempt(covariance, &failed);
    if (!j) {
        const double eps = 1e-8 * covariance.trace() / static_cast<double>(n);
        Eigen::MatrixXd ridged = covariance;
        ridged.diagonal().array() += eps;
        j = attempt(ridged, &failed);
        if (!j) throw NumericalError("logo_precision: singular " + failed + " even after ridge");
        out.ridge_applied = true;
    }
    // exact symmetry
    out.matrix = 0.5 * (*j + j->transpose());
    return out;
}

double log_det(const Eigen::MatrixXd& precision) {
    Eigen::LLT<Eigen::MatrixXd> llt(precision);
    if (llt.info() != Eigen::Success) throw NumericalError("log_det: matrix is not positive definite");
    return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

void write_edges(const std::filesystem::path& path, const TmfgGraph& graph, const Eigen::MatrixXd& weights) {
    Table t;
    t.header = {"i", "j", "weight"};
    for (const auto& [i, j] : graph.edges)
        t.rows.push_back({std::to_string(i), std::to_string(j), format_number(weights(i, j))});
    write_table(path, t);
}

} // namespace mrisvm
