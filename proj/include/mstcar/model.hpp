#pragma once

#include <Eigen/Core>

#include "mstcar/covariance.hpp"
#include "mstcar/data.hpp"
#include "mstcar/graph.hpp"

namespace mstcar {

// Hyperpriors: Beta(a, b) on each rho_k, InvWishart(g_scale, g_df) on each
// G_t, and the improper (tau_k^2)^{-1/2} density induced by a flat prior on
// tau_k. Defaults follow the vague settings used throughout: Beta(9, 1) and
// scale n_g * I with n_g + 2 degrees of freedom.
struct PriorConfig {
  double rho_beta_a = 9.0;
  double rho_beta_b = 1.0;
  Eigen::MatrixXd g_scale;
  double g_df = 0.0;

  static PriorConfig defaults(int n_groups);
  void validate(int n_groups) const;
};

enum class CellSet { All, Observed, Unobserved };

// Gaussian rate log likelihood: sum over the selected cells of
// log N(y | x'beta_k + z, tau_k^2 / n). Uses the completed data in `state.y`.
double log_likelihood(const RateDataset& data, const ModelState& state,
                      CellSet cells);
inline double log_likelihood(const RateDataset& data, const ModelState& state,
                             bool observed_only) {
  return log_likelihood(data, state,
                        observed_only ? CellSet::Observed : CellSet::All);
}

// Improper spatial log prior on the stacked random effects (one row per
// site), up to a constant:
//   -(n_sites - 1)/2 * log det sigma_eta
//   - 1/2 * sum over edges of (z_i - z_j)' sigma_eta^{-1} (z_i - z_j).
// Evaluated through the factored form (per-group whitening + per-time
// G_t^{-1} quadratic forms), never through a dense Kronecker product.
double mstcar_log_prior(const Eigen::MatrixXd& z, const AdjacencyGraph& graph,
                        const CovarianceSpec& spec);

// Conditional of one site's block given the rest: mean is the neighbor
// average, covariance sigma_eta / m_i.
struct ConditionalZ {
  Eigen::VectorXd mean;
  Eigen::MatrixXd covariance;
};
ConditionalZ conditional_z_params(int site, const Eigen::MatrixXd& z,
                                  const AdjacencyGraph& graph,
                                  const CovarianceSpec& spec);

double log_beta_density(double x, double a, double b);
double log_multivariate_gamma(int p, double a);
double log_inverse_wishart_density(const Eigen::MatrixXd& x,
                                   const Eigen::MatrixXd& scale, double df);

// sum_k log Beta(rho_k) + sum_t log InvWishart(G_t) - 1/2 sum_k log tau2_k.
double log_hyperpriors(const CovarianceSpec& spec, const PriorConfig& prior);

// Complete-data joint log density (likelihood over all cells + spatial prior
// + hyperpriors), with the same constants omitted everywhere. Only ever used
// through differences.
double joint_log_density(const RateDataset& data, const ModelState& state,
                         const AdjacencyGraph& graph,
                         const PriorConfig& prior);

}  // namespace mstcar
