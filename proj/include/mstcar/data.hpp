#pragma once

#include <vector>

#include <Eigen/Core>

#include "mstcar/covariance.hpp"
#include "mstcar/errors.hpp"

namespace mstcar {

// Rates, populations, covariates and the observed/unobserved partition.
// Matrices are n_sites rows by (n_groups * n_time) columns with the shared
// stacked-column convention pos(t, k) = t * n_groups + k.
//
// Populations are stored in units of 100,000 persons. Cells with no
// population carry the sentinel (1 person) so every cell has a usable,
// numerically negligible precision, and their rates are imputed by the
// sampler rather than read from `y`.
struct RateDataset {
  // 1 person, in units of 100,000.
  static constexpr double kSentinelPop = 1e-5;

  int n_sites = 0;
  int n_groups = 0;
  int n_time = 0;

  Eigen::MatrixXd y;     // rate per 100,000; 0 where unobserved
  Eigen::MatrixXd pop;   // population / 1e5; >= kSentinelPop everywhere
  Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> observed;

  // Covariates. The default design is one intercept per (group, time):
  // x_{ikt} = e_t with p = n_time. A custom per-cell design may be supplied
  // as one (n_groups * n_time) x p matrix per site; recentering of the
  // random effects requires the default design.
  int p = 0;
  bool time_intercept_design = true;
  std::vector<Eigen::MatrixXd> custom_x;  // empty unless custom

  int col(int k, int t) const { return t * n_groups + k; }
  int dim() const { return n_groups * n_time; }

  static RateDataset with_intercept_design(int n_sites, int n_groups,
                                           int n_time);

  // x_{ikt}' beta_k for a beta matrix with one row per group.
  double fixed_effect(int site, int k, int t,
                      const Eigen::MatrixXd& beta) const {
    if (time_intercept_design) return beta(k, t);
    return custom_x[static_cast<std::size_t>(site)]
        .row(col(k, t))
        .dot(beta.row(k));
  }

  Eigen::VectorXd x_row(int site, int k, int t) const;

  int observed_count(int group) const;
  std::vector<std::pair<int, int>> unobserved_cells() const;  // (site, col)

  void validate() const;
};

// One MCMC configuration. `y` is the completed data matrix: it equals the
// dataset's y on observed cells and holds the current imputations elsewhere.
struct ModelState {
  Eigen::MatrixXd beta;  // n_groups x p
  Eigen::MatrixXd z;     // n_sites x (n_groups * n_time)
  CovarianceSpec cov;
  Eigen::MatrixXd y;

  void validate(const RateDataset& data) const;
};

}  // namespace mstcar
