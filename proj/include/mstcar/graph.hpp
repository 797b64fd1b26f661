#pragma once

#include <utility>
#include <vector>

#include <Eigen/Core>

namespace mstcar {

// Symmetric binary adjacency over n_sites areal units. Immutable once built;
// safe to share across threads. Site indices are 0-based in the API (file
// formats use 1-based indices and are converted on read).
class AdjacencyGraph {
 public:
  // Validates, deduplicates unordered pairs, and requires a connected graph
  // with no isolated site. Throws InvalidEdge, IsolatedSite,
  // DisconnectedGraph.
  AdjacencyGraph(int n_sites, const std::vector<std::pair<int, int>>& edges);

  int n_sites() const { return n_sites_; }
  // Canonical edge list: each pair (a, b) with a < b, sorted.
  const std::vector<std::pair<int, int>>& edges() const { return edges_; }
  const std::vector<int>& neighbors(int site) const {
    return neighbors_[static_cast<std::size_t>(site)];
  }
  int neighbor_count(int site) const {
    return static_cast<int>(neighbors_[static_cast<std::size_t>(site)].size());
  }

  // Dense graph Laplacian D - W.
  Eigen::MatrixXd laplacian() const;

 private:
  int n_sites_;
  std::vector<std::pair<int, int>> edges_;
  std::vector<std::vector<int>> neighbors_;
};

AdjacencyGraph build_graph(int n_sites,
                           const std::vector<std::pair<int, int>>& edges);

// Edge-sum form of the quadratic form z' {(D-W) ⊗ P} z for per-site vectors
// of length q (rows of `field`) and a q×q symmetric precision P:
//   sum over edges (i,j) of (z_i - z_j)' P (z_i - z_j).
// Avoids materializing the n_sites*q Kronecker matrix.
double laplacian_quadratic_form(const AdjacencyGraph& graph,
                                const Eigen::MatrixXd& field,
                                const Eigen::MatrixXd& inner_precision);

// Full eigendecomposition of D - W. For a connected graph exactly one
// eigenvalue is numerically zero (constant eigenvector); the basis drives
// the intrinsic-field sampler.
struct SpectralBasis {
  Eigen::VectorXd eigenvalues;   // ascending
  Eigen::MatrixXd eigenvectors;  // orthonormal columns, matching order
  int n_zero = 0;                // eigenvalues below threshold

  // |lambda| < 1e-9 * max(lambda) counts as zero.
  static constexpr double kZeroTolFactor = 1e-9;
};

SpectralBasis spectral_basis(const AdjacencyGraph& graph);

}  // namespace mstcar
