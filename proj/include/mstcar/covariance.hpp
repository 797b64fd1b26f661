#pragma once

#include <vector>

#include <Eigen/Core>

namespace mstcar {

// AR(1) correlation matrix: entry (t, t') = rho^|t - t'|, rho in [0, 1).
Eigen::MatrixXd ar1_matrix(double rho, int n_time);

// Closed-form lower Cholesky factor of ar1_matrix(rho, n_time):
//   L(t, 0) = rho^t,  L(t, j) = rho^(t-j) * sqrt(1 - rho^2) for 1 <= j <= t.
Eigen::MatrixXd ar1_cholesky(double rho, int n_time);

// Applies the inverse of the AR(1) Cholesky factor in O(n_time) using its
// bidiagonal form: out[0] = in[0], out[t] = (in[t] - rho*in[t-1]) / sqrt(1-rho^2).
Eigen::VectorXd ar1_whiten(const Eigen::VectorXd& series, double rho);

// The variance side of the model: one n_groups x n_groups SPD covariance per
// time point, one AR(1) correlation and one error variance per group.
//
// Stacked (time, group) vectors everywhere in the library use the index
// pos(t, k) = t * n_groups + k (groups contiguous within a time block).
struct CovarianceSpec {
  std::vector<Eigen::MatrixXd> g;  // n_time matrices
  Eigen::VectorXd rho;             // n_groups, each in [0, 1)
  Eigen::VectorXd tau2;            // n_groups, each > 0

  int n_time() const { return static_cast<int>(g.size()); }
  int n_groups() const { return static_cast<int>(rho.size()); }
  int dim() const { return n_time() * n_groups(); }

  // Throws InvalidRho / NotPositiveDefinite / DimensionMismatch.
  void validate() const;
};

// Group-time cross covariance built from the spec's factored form: a
// block-lower-triangular mixing factor A (per-group AR(1) Cholesky acting
// along each group's time series) around blockdiag(G_1..G_T):
//   sigma_eta = A blockdiag(G_t) A'.
// Dense assembly is capped at dim <= 512; the sampler never materializes it.
Eigen::MatrixXd assemble_sigma_eta(const CovarianceSpec& spec);

// log det sigma_eta = sum_k (n_time - 1) log(1 - rho_k^2) + sum_t log det G_t.
double sigma_eta_logdet(const CovarianceSpec& spec);

// sigma_eta^{-1} = A^{-T} blockdiag(G_t^{-1}) A^{-1}, built blockwise from
// the factors without forming sigma_eta.
Eigen::MatrixXd sigma_eta_precision(const CovarianceSpec& spec);

// A v: for each group, colors that group's time series with its AR(1)
// Cholesky factor.
Eigen::VectorXd apply_mixing(const CovarianceSpec& spec,
                             const Eigen::VectorXd& v);

// A^{-1} v: per-group ar1_whiten of the stacked vector. Output d satisfies
// apply_mixing(spec, d) == increment.
Eigen::VectorXd whiten_increment(const Eigen::VectorXd& increment,
                                 const Eigen::VectorXd& rho_list);

}  // namespace mstcar
