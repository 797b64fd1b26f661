#include "mstcar/graph.hpp"

#include <algorithm>
#include <string>

#include <Eigen/Eigenvalues>

#include "mstcar/errors.hpp"

namespace mstcar {

AdjacencyGraph::AdjacencyGraph(int n_sites,
                               const std::vector<std::pair<int, int>>& edges)
    : n_sites_(n_sites) {
  if (n_sites < 2) throw InvalidEdge("need at least 2 sites");
  edges_.reserve(edges.size());
  for (auto [a, b] : edges) {
    if (a == b)
      throw InvalidEdge("self-loop at site " + std::to_string(a));
    if (a < 0 || b < 0 || a >= n_sites || b >= n_sites)
      throw InvalidEdge("edge (" + std::to_string(a) + "," +
                        std::to_string(b) + ") out of range");
    if (a > b) std::swap(a, b);
    edges_.emplace_back(a, b);
  }
  std::sort(edges_.begin(), edges_.end());
  edges_.erase(std::unique(edges_.begin(), edges_.end()), edges_.end());

  neighbors_.resize(static_cast<std::size_t>(n_sites));
  for (auto [a, b] : edges_) {
    neighbors_[static_cast<std::size_t>(a)].push_back(b);
    neighbors_[static_cast<std::size_t>(b)].push_back(a);
  }
  for (auto& list : neighbors_) std::sort(list.begin(), list.end());

  // BFS connectivity check; an isolated site is just an unreachable
  // component, so connectivity also guarantees m_i >= 1 everywhere.
  std::vector<char> seen(static_cast<std::size_t>(n_sites), 0);
  std::vector<int> queue{0};
  seen[0] = 1;
  int reached = 1;
  while (!queue.empty()) {
    const int v = queue.back();
    queue.pop_back();
    for (int w : neighbors_[static_cast<std::size_t>(v)]) {
      if (!seen[static_cast<std::size_t>(w)]) {
        seen[static_cast<std::size_t>(w)] = 1;
        ++reached;
        queue.push_back(w);
      }
    }
  }
  if (reached != n_sites)
    throw DisconnectedGraph(std::to_string(n_sites - reached) +
                            " site(s) unreachable from site 0");
}

Eigen::MatrixXd AdjacencyGraph::laplacian() const {
  Eigen::MatrixXd lap = Eigen::MatrixXd::Zero(n_sites_, n_sites_);
  for (auto [a, b] : edges_) {
    lap(a, a) += 1.0;
    lap(b, b) += 1.0;
    lap(a, b) -= 1.0;
    lap(b, a) -= 1.0;
  }
  return lap;
}

AdjacencyGraph build_graph(int n_sites,
                           const std::vector<std::pair<int, int>>& edges) {
  return AdjacencyGraph(n_sites, edges);
}

double laplacian_quadratic_form(const AdjacencyGraph& graph,
                                const Eigen::MatrixXd& field,
                                const Eigen::MatrixXd& inner_precision) {
  if (field.rows() != graph.n_sites())
    throw DimensionMismatch("field must have one row per site");
  if (inner_precision.rows() != field.cols() ||
      inner_precision.cols() != field.cols())
    throw DimensionMismatch("inner precision must be q x q");
  double total = 0.0;
  for (auto [a, b] : graph.edges()) {
    const Eigen::VectorXd d = field.row(a) - field.row(b);
    total += d.dot(inner_precision * d);
  }
  return total;
}

SpectralBasis spectral_basis(const AdjacencyGraph& graph) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(graph.laplacian());
  if (solver.info() != Eigen::Success)
    throw EigenFailure("Laplacian eigendecomposition did not converge");
  SpectralBasis basis;
  basis.eigenvalues = solver.eigenvalues();
  basis.eigenvectors = solver.eigenvectors();
  const double tol =
      SpectralBasis::kZeroTolFactor * basis.eigenvalues.cwiseAbs().maxCoeff();
  basis.n_zero = static_cast<int>(
      (basis.eigenvalues.array().abs() < tol).count());
  return basis;
}

}  // namespace mstcar
