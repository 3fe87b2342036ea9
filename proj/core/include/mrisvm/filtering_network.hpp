#pragma once

#include <Eigen/Dense>

#include <array>
#include <cstddef>
#include <filesystem>
#include <set>
#include <utility>
#include <vector>

namespace mrisvm {

using Clique4 = std::array<int, 4>;
using Triangle = std::array<int, 3>;
using Edge = std::pair<int, int>; // first < second

// Triangulated Maximally Filtered Graph. cliques[0] is the seed tetrahedron;
// cliques[i] for i >= 1 was created by inserting a vertex into separators[i - 1].
struct TmfgGraph {
    int n = 0;
    std::set<Edge> edges;
    std::vector<Clique4> cliques;
    std::vector<Triangle> separators;

    bool has_edge(int a, int b) const;
};

// Greedy TMFG: seed with the 4-clique of maximal total similarity, then insert
// the (vertex, face) pair with the largest sum of similarities to the face.
// Ties go to the lowest vertex index, then the oldest face.
// Requires n >= 3 and a finite symmetric matrix; n == 3 yields a single triangle.
TmfgGraph build_tmfg(const Eigen::MatrixXd& similarity);

// Element-wise squared correlation of the rows of data (variables x samples).
// Constant rows get zero similarity to every other row.
Eigen::MatrixXd squared_correlation(const Eigen::MatrixXd& data);

struct SparsePrecision {
    Eigen::MatrixXd matrix;
    std::set<Edge> support; // off-diagonal pairs allowed to be nonzero
    bool ridge_applied = false;
};

// Local-global inversion: sum of embedded clique inverses minus embedded
// separator inverses. A singular submatrix triggers one retry with the
// covariance ridged by 1e-8 * trace / n; a second failure throws NumericalError
// naming the clique.
SparsePrecision logo_precision(const Eigen::MatrixXd& covariance, const TmfgGraph& graph);

// ln det via Cholesky. Throws NumericalError when not positive definite.
double log_det(const Eigen::MatrixXd& precision);
inline double log_det(const SparsePrecision& precision) { return log_det(precision.matrix); }

// Debug dump: "i,j,weight" rows.
void write_edges(const std::filesystem::path& path, const TmfgGraph& graph,
                 const Eigen::MatrixXd& weights);

} // namespace mrisvm
