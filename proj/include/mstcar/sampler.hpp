#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Core>

#include "mstcar/data.hpp"
#include "mstcar/graph.hpp"
#include "mstcar/model.hpp"
#include "mstcar/rng.hpp"

namespace mstcar {

// Which covariance structure the chain maintains:
//   Mstcar           - free G_t per time point, free rho_k per group
//   Separable        - one G shared across time, one rho shared across groups
//   StcarIndependent - diagonal G, constant in time; free rho_k. The model
//                      then factorizes into independent per-group chains.
enum class Variant { Mstcar, Separable, StcarIndependent };

std::string variant_name(Variant v);
Variant variant_from_name(const std::string& name);

struct SamplerConfig {
  int n_iterations = 6000;
  int burn_in = 1000;
  int thin = 10;
  Variant variant = Variant::Mstcar;
  double rho_proposal_sd = 0.5;  // logit-scale random walk sd (initial)
  std::uint64_t seed = 1;
  bool center_z = true;
  // Tune the rho proposal toward 0.44 acceptance during burn-in, then freeze.
  bool adapt_rho = true;
  int checkpoint_every = 0;      // iterations; 0 disables
  std::string checkpoint_path;
  std::string resume_path;       // continue from a checkpoint file

  void validate() const;
};

// Thinned post-burn-in draws. Draw s of the imputed values lines up with
// missing_cells (site, column) pairs.
struct PosteriorSamples {
  int n_sites = 0, n_groups = 0, n_time = 0, p = 0;
  Variant variant = Variant::Mstcar;
  std::uint64_t seed = 0;
  int n_iterations = 0, burn_in = 0, thin = 0;
  std::vector<std::pair<int, int>> missing_cells;

  std::vector<Eigen::MatrixXd> beta;               // n_groups x p
  std::vector<Eigen::MatrixXd> z;                  // n_sites x dim
  std::vector<std::vector<Eigen::MatrixXd>> g;     // n_time of ng x ng
  std::vector<Eigen::VectorXd> rho;
  std::vector<Eigen::VectorXd> tau2;
  std::vector<Eigen::VectorXd> y_u;
  std::vector<int> iteration_index;
  Eigen::VectorXd rho_accept_rate;                 // per group, post burn-in

  int n_draws() const { return static_cast<int>(beta.size()); }
  int dim() const { return n_groups * n_time; }
};

// ---------------------------------------------------------------------------
// Full-conditional parameters, exposed so the verification suite can compare
// each kernel against the joint density directly.

struct GaussianFullConditional {
  Eigen::VectorXd mean;
  Eigen::MatrixXd precision;

  double log_density(const Eigen::VectorXd& x) const;
};

struct InvGammaParams {
  double shape = 0.0;
  double rate = 0.0;

  double log_density(double x) const;
};

struct InvWishartParams {
  Eigen::MatrixXd scale;
  double df = 0.0;
};

GaussianFullConditional beta_full_conditional(const RateDataset& data,
                                              const ModelState& state,
                                              int group);

// Building block shared by the sampler and the prior/likelihood limit tests:
// precision = m_i * q_eta + diag(data_precision), information vector
// m_i * q_eta * neighbor_mean + data_precision .* data_mean.
GaussianFullConditional z_site_conditional_from_parts(
    int m_i, const Eigen::VectorXd& neighbor_mean,
    const Eigen::MatrixXd& q_eta, const Eigen::VectorXd& data_precision,
    const Eigen::VectorXd& data_mean);

GaussianFullConditional z_site_full_conditional(int site,
                                                const RateDataset& data,
                                                const ModelState& state,
                                                const AdjacencyGraph& graph,
                                                const Eigen::MatrixXd& q_eta);

// Observed cells only; see the likelihood decomposition note in run_chain.
InvGammaParams tau2_full_conditional(const RateDataset& data,
                                     const ModelState& state, int group);

// Scatter matrices S_t = sum over edges of d_t d_t' where d is the whitened
// site increment; one n_groups x n_groups matrix per time point.
std::vector<Eigen::MatrixXd> edge_increment_scatter(
    const Eigen::MatrixXd& z, const AdjacencyGraph& graph,
    const Eigen::VectorXd& rho_list, int n_groups);

InvWishartParams g_full_conditional(int t,
                                    const std::vector<Eigen::MatrixXd>& scatter,
                                    const AdjacencyGraph& graph,
                                    const PriorConfig& prior);

// Separable variant: one G pooled over time blocks.
InvWishartParams g_full_conditional_pooled(
    const std::vector<Eigen::MatrixXd>& scatter, const AdjacencyGraph& graph,
    const PriorConfig& prior);

// Independent-STCAR variant: per-group variance with the one-dimensional
// inverse Wishart reduction of the G prior, InvGamma(g_df/2, g_scale_kk/2).
InvGammaParams stcar_sigma2_full_conditional(
    int k, const std::vector<Eigen::MatrixXd>& scatter,
    const AdjacencyGraph& graph, const PriorConfig& prior);

// Metropolis-Hastings target for rho_k (spatial prior + Beta prior), without
// the logit-transform Jacobian (the proposal machinery adds it).
double rho_log_target(int k, double rho_value, const Eigen::MatrixXd& z,
                      const AdjacencyGraph& graph, const CovarianceSpec& spec,
                      const PriorConfig& prior);
// Shared-rho target for the separable variant: a single Beta prior.
double rho_log_target_shared(double rho_value, const Eigen::MatrixXd& z,
                             const AdjacencyGraph& graph,
                             const CovarianceSpec& spec,
                             const PriorConfig& prior);

// ---------------------------------------------------------------------------
// Drawing kernels. Each mutates the relevant part of `state`.

void update_beta(const RateDataset& data, ModelState& state, Rng& rng);
void update_z_site(int site, const RateDataset& data, ModelState& state,
                   const AdjacencyGraph& graph, const Eigen::MatrixXd& q_eta,
                   Rng& rng);
void update_tau2(const RateDataset& data, ModelState& state, Rng& rng);
void update_g(int t, ModelState& state,
              const std::vector<Eigen::MatrixXd>& scatter,
              const AdjacencyGraph& graph, const PriorConfig& prior, Rng& rng);
// Returns (new rho_k, accepted).
std::pair<double, bool> update_rho(int k, ModelState& state,
                                   const AdjacencyGraph& graph,
                                   const PriorConfig& prior,
                                   double proposal_sd, Rng& rng);
std::pair<double, bool> update_rho_shared(ModelState& state,
                                          const AdjacencyGraph& graph,
                                          const PriorConfig& prior,
                                          double proposal_sd, Rng& rng);
void impute_missing(const RateDataset& data, ModelState& state, Rng& rng);

// Weighted-least-squares beta, z = 0, prior-mean G, rho = 0.8, moment-matched
// tau2; imputations start at the fitted mean.
ModelState initial_state(const RateDataset& data, const PriorConfig& prior);

// Systematic-scan chain: beta, z sweep (with optional recentering absorbed
// into the intercepts), tau2, G, rho, imputation. Deterministic given the
// seed. `init` overrides the default initialization (the simulation harness
// passes the truth).
PosteriorSamples run_chain(const RateDataset& data, const AdjacencyGraph& graph,
                           const PriorConfig& prior, const SamplerConfig& config,
                           const ModelState* init = nullptr);

}  // namespace mstcar
