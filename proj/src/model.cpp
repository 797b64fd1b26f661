#include "mstcar/model.hpp"

#include <cmath>

#include <Eigen/Cholesky>

namespace mstcar {

namespace {
constexpr double kLogTwoPi = 1.8378770664093454836;
}

RateDataset RateDataset::with_intercept_design(int n_sites, int n_groups,
                                               int n_time) {
  RateDataset d;
  d.n_sites = n_sites;
  d.n_groups = n_groups;
  d.n_time = n_time;
  d.p = n_time;
  d.time_intercept_design = true;
  const int cols = n_groups * n_time;
  d.y = Eigen::MatrixXd::Zero(n_sites, cols);
  d.pop = Eigen::MatrixXd::Constant(n_sites, cols, 1.0);
  d.observed.setConstant(n_sites, cols, true);
  return d;
}

Eigen::VectorXd RateDataset::x_row(int site, int k, int t) const {
  if (time_intercept_design) {
    Eigen::VectorXd e = Eigen::VectorXd::Zero(p);
    e[t] = 1.0;
    return e;
  }
  return custom_x[static_cast<std::size_t>(site)].row(col(k, t));
}

int RateDataset::observed_count(int group) const {
  int count = 0;
  for (int t = 0; t < n_time; ++t)
    for (int i = 0; i < n_sites; ++i)
      if (observed(i, col(group, t))) ++count;
  return count;
}

std::vector<std::pair<int, int>> RateDataset::unobserved_cells() const {
  std::vector<std::pair<int, int>> cells;
  for (int i = 0; i < n_sites; ++i)
    for (int c = 0; c < dim(); ++c)
      if (!observed(i, c)) cells.emplace_back(i, c);
  return cells;
}

void RateDataset::validate() const {
  const int cols = dim();
  if (n_sites < 1 || n_groups < 1 || n_time < 1)
    throw DimensionMismatch("dataset dimensions must be positive");
  if (y.rows() != n_sites || y.cols() != cols || pop.rows() != n_sites ||
      pop.cols() != cols || observed.rows() != n_sites ||
      observed.cols() != cols)
    throw DimensionMismatch("dataset matrices do not match dimensions");
  if ((pop.array() <= 0.0).any())
    throw Error("populations must be positive (sentinel for missing cells)");
  if (!time_intercept_design) {
    if (custom_x.size() != static_cast<std::size_t>(n_sites))
      throw DimensionMismatch("custom design needs one matrix per site");
    for (const auto& x : custom_x)
      if (x.rows() != cols || x.cols() != p)
        throw DimensionMismatch("custom design matrix shape");
  } else if (p != n_time) {
    throw DimensionMismatch("intercept design requires p == n_time");
  }
}

void ModelState::validate(const RateDataset& data) const {
  if (beta.rows() != data.n_groups || beta.cols() != data.p)
    throw DimensionMismatch("beta must be n_groups x p");
  if (z.rows() != data.n_sites || z.cols() != data.dim())
    throw DimensionMismatch("z must be n_sites x (n_groups * n_time)");
  if (y.rows() != data.n_sites || y.cols() != data.dim())
    throw DimensionMismatch("completed y must match dataset shape");
  if (cov.n_groups() != data.n_groups || cov.n_time() != data.n_time)
    throw DimensionMismatch("covariance spec does not match dataset");
  cov.validate();
}

PriorConfig PriorConfig::defaults(int n_groups) {
  PriorConfig prior;
  prior.g_scale =
      static_cast<double>(n_groups) *
      Eigen::MatrixXd::Identity(n_groups, n_groups);
  prior.g_df = n_groups + 2.0;
  return prior;
}

void PriorConfig::validate(int n_groups) const {
  if (!(rho_beta_a > 0.0) || !(rho_beta_b > 0.0))
    throw ConfigError("Beta prior parameters must be positive");
  if (g_scale.rows() != n_groups || g_scale.cols() != n_groups)
    throw DimensionMismatch("g_scale must be n_groups x n_groups");
  if (!(g_df > n_groups - 1.0))
    throw ConfigError("inverse Wishart df must exceed n_groups - 1");
  Eigen::LLT<Eigen::MatrixXd> llt(g_scale);
  if (llt.info() != Eigen::Success)
    throw NotPositiveDefinite("g_scale");
}

double log_likelihood(const RateDataset& data, const ModelState& state,
                      CellSet cells) {
  state.validate(data);
  double total = 0.0;
  for (int t = 0; t < data.n_time; ++t)
    for (int k = 0; k < data.n_groups; ++k) {
      const int c = data.col(k, t);
      const double tau2 = state.cov.tau2[k];
      for (int i = 0; i < data.n_sites; ++i) {
        const bool obs = data.observed(i, c);
        if (cells == CellSet::Observed && !obs) continue;
        if (cells == CellSet::Unobserved && obs) continue;
        const double var = tau2 / data.pop(i, c);
        const double resid =
            state.y(i, c) - data.fixed_effect(i, k, t, state.beta) -
            state.z(i, c);
        total += -0.5 * (kLogTwoPi + std::log(var) + resid * resid / var);
      }
    }
  return total;
}

double mstcar_log_prior(const Eigen::MatrixXd& z, const AdjacencyGraph& graph,
                        const CovarianceSpec& spec) {
  if (z.rows() != graph.n_sites() || z.cols() != spec.dim())
    throw DimensionMismatch("z must be n_sites x (n_groups * n_time)");
  const int ng = spec.n_groups();
  const int nt = spec.n_time();
  std::vector<Eigen::LLT<Eigen::MatrixXd>> g_llt;
  g_llt.reserve(static_cast<std::size_t>(nt));
  for (const auto& gt : spec.g) {
    g_llt.emplace_back(gt);
    if (g_llt.back().info() != Eigen::Success)
      throw NotPositiveDefinite("G_t");
  }
  double quad = 0.0;
  for (auto [a, b] : graph.edges()) {
    const Eigen::VectorXd d =
        whiten_increment(z.row(a) - z.row(b), spec.rho);
    for (int t = 0; t < nt; ++t) {
      const Eigen::VectorXd dt = d.segment(t * ng, ng);
      quad += dt.dot(g_llt[static_cast<std::size_t>(t)].solve(dt));
    }
  }
  const double n_positive = graph.n_sites() - 1;
  return -0.5 * n_positive * sigma_eta_logdet(spec) - 0.5 * quad;
}

ConditionalZ conditional_z_params(int site, const Eigen::MatrixXd& z,
                                  const AdjacencyGraph& graph,
                                  const CovarianceSpec& spec) {
  if (site < 0 || site >= graph.n_sites())
    throw DimensionMismatch("site index out of range");
  const auto& nbrs = graph.neighbors(site);
  if (nbrs.empty()) throw IsolatedSite("site has no neighbors");
  ConditionalZ out;
  out.mean = Eigen::VectorXd::Zero(spec.dim());
  for (int j : nbrs) out.mean += z.row(j);
  out.mean /= static_cast<double>(nbrs.size());
  out.covariance =
      assemble_sigma_eta(spec) / static_cast<double>(nbrs.size());
  return out;
}

double log_beta_density(double x, double a, double b) {
  if (!(x > 0.0) || !(x < 1.0)) throw InvalidRho("Beta density needs x in (0,1)");
  return (a - 1.0) * std::log(x) + (b - 1.0) * std::log1p(-x) -
         (std::lgamma(a) + std::lgamma(b) - std::lgamma(a + b));
}

double log_multivariate_gamma(int p, double a) {
  double v = 0.25 * p * (p - 1) * std::log(3.14159265358979323846);
  for (int j = 0; j < p; ++j) v += std::lgamma(a - 0.5 * j);
  return v;
}

double log_inverse_wishart_density(const Eigen::MatrixXd& x,
                                   const Eigen::MatrixXd& scale, double df) {
  const int p = static_cast<int>(x.rows());
  Eigen::LLT<Eigen::MatrixXd> xllt(x);
  Eigen::LLT<Eigen::MatrixXd> sllt(scale);
  if (xllt.info() != Eigen::Success || sllt.info() != Eigen::Success)
    throw NotPositiveDefinite("inverse Wishart density arguments");
  const double logdet_x =
      2.0 * Eigen::MatrixXd(xllt.matrixL()).diagonal().array().log().sum();
  const double logdet_scale =
      2.0 * Eigen::MatrixXd(sllt.matrixL()).diagonal().array().log().sum();
  const double trace_term = xllt.solve(scale).trace();
  return 0.5 * df * logdet_scale - 0.5 * df * p * std::log(2.0) -
         log_multivariate_gamma(p, 0.5 * df) -
         0.5 * (df + p + 1.0) * logdet_x - 0.5 * trace_term;
}

double log_hyperpriors(const CovarianceSpec& spec, const PriorConfig& prior) {
  spec.validate();
  prior.validate(spec.n_groups());
  double total = 0.0;
  for (int k = 0; k < spec.n_groups(); ++k) {
    total += log_beta_density(spec.rho[k], prior.rho_beta_a, prior.rho_beta_b);
    total += -0.5 * std::log(spec.tau2[k]);
  }
  for (const auto& gt : spec.g)
    total += log_inverse_wishart_density(gt, prior.g_scale, prior.g_df);
  return total;
}

double joint_log_density(const RateDataset& data, const ModelState& state,
                         const AdjacencyGraph& graph,
                         const PriorConfig& prior) {
  return log_likelihood(data, state, CellSet::All) +
         mstcar_log_prior(state.z, graph, state.cov) +
         log_hyperpriors(state.cov, prior);
}

}  // namespace mstcar
