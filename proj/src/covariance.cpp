#include "mstcar/covariance.hpp"

#include <cmath>
#include <string>

#include <Eigen/Cholesky>

#include "mstcar/errors.hpp"

namespace mstcar {

namespace {

void check_rho(double rho) {
  if (!(rho >= 0.0) || !(rho < 1.0))
    throw InvalidRho("rho = " + std::to_string(rho) + " outside [0,1)");
}

Eigen::MatrixXd g_inverse(const Eigen::MatrixXd& g) {
  Eigen::LLT<Eigen::MatrixXd> llt(g);
  if (llt.info() != Eigen::Success)
    throw NotPositiveDefinite("group covariance G_t");
  return llt.solve(Eigen::MatrixXd::Identity(g.rows(), g.cols()));
}

}  // namespace

Eigen::MatrixXd ar1_matrix(double rho, int n_time) {
  check_rho(rho);
  Eigen::MatrixXd r(n_time, n_time);
  for (int t = 0; t < n_time; ++t)
    for (int s = 0; s < n_time; ++s) r(t, s) = std::pow(rho, std::abs(t - s));
  return r;
}

Eigen::MatrixXd ar1_cholesky(double rho, int n_time) {
  check_rho(rho);
  const double s = std::sqrt(1.0 - rho * rho);
  Eigen::MatrixXd l = Eigen::MatrixXd::Zero(n_time, n_time);
  for (int t = 0; t < n_time; ++t) {
    l(t, 0) = std::pow(rho, t);
    for (int j = 1; j <= t; ++j) l(t, j) = std::pow(rho, t - j) * s;
  }
  return l;
}

Eigen::VectorXd ar1_whiten(const Eigen::VectorXd& series, double rho) {
  check_rho(rho);
  const Eigen::Index n = series.size();
  Eigen::VectorXd out(n);
  if (n == 0) return out;
  out[0] = series[0];
  const double inv_s = 1.0 / std::sqrt(1.0 - rho * rho);
  for (Eigen::Index t = 1; t < n; ++t)
    out[t] = (series[t] - rho * series[t - 1]) * inv_s;
  return out;
}

void CovarianceSpec::validate() const {
  const int ng = n_groups();
  if (ng < 1 || n_time() < 1)
    throw DimensionMismatch("covariance spec needs n_groups, n_time >= 1");
  if (tau2.size() != ng)
    throw DimensionMismatch("tau2 length must equal n_groups");
  for (int k = 0; k < ng; ++k) {
    check_rho(rho[k]);
    if (!(tau2[k] > 0.0)) throw Error("tau2 must be positive");
  }
  for (const auto& gt : g) {
    if (gt.rows() != ng || gt.cols() != ng)
      throw DimensionMismatch("G_t must be n_groups x n_groups");
    if (!gt.isApprox(gt.transpose(), 1e-10))
      throw NotPositiveDefinite("G_t not symmetric");
    Eigen::LLT<Eigen::MatrixXd> llt(gt);
    if (llt.info() != Eigen::Success)
      throw NotPositiveDefinite("G_t has a nonpositive eigenvalue");
  }
}

Eigen::MatrixXd assemble_sigma_eta(const CovarianceSpec& spec) {
  spec.validate();
  const int ng = spec.n_groups();
  const int nt = spec.n_time();
  const int d = ng * nt;
  if (d > 512)
    throw DimensionMismatch(
        "dense sigma_eta capped at dim 512; use the factored form");
  std::vector<Eigen::MatrixXd> chol(static_cast<std::size_t>(ng));
  for (int k = 0; k < ng; ++k)
    chol[static_cast<std::size_t>(k)] = ar1_cholesky(spec.rho[k], nt);
  Eigen::MatrixXd sigma = Eigen::MatrixXd::Zero(d, d);
  // sigma[(t,k),(t',k')] = sum_s L_k(t,s) {G_s}_{k,k'} L_k'(t',s)
  for (int t = 0; t < nt; ++t)
    for (int u = 0; u < nt; ++u)
      for (int s = 0; s <= std::min(t, u); ++s) {
        const Eigen::MatrixXd& gs = spec.g[static_cast<std::size_t>(s)];
        for (int k = 0; k < ng; ++k)
          for (int k2 = 0; k2 < ng; ++k2)
            sigma(t * ng + k, u * ng + k2) +=
                chol[static_cast<std::size_t>(k)](t, s) * gs(k, k2) *
                chol[static_cast<std::size_t>(k2)](u, s);
      }
  return sigma;
}

double sigma_eta_logdet(const CovarianceSpec& spec) {
  spec.validate();
  const int nt = spec.n_time();
  double logdet = 0.0;
  for (int k = 0; k < spec.n_groups(); ++k)
    logdet += (nt - 1) * std::log1p(-spec.rho[k] * spec.rho[k]);
  for (const auto& gt : spec.g) {
    Eigen::LLT<Eigen::MatrixXd> llt(gt);
    if (llt.info() != Eigen::Success) throw NotPositiveDefinite("G_t");
    logdet += 2.0 * Eigen::MatrixXd(llt.matrixL()).diagonal().array().log().sum();
  }
  return logdet;
}

Eigen::MatrixXd sigma_eta_precision(const CovarianceSpec& spec) {
  spec.validate();
  const int ng = spec.n_groups();
  const int nt = spec.n_time();
  const int d = ng * nt;
  // Row block t of A^{-1} has a diagonal block M_t at column t and N_t at
  // column t-1:  M_0 = I, M_t = diag(1/s_k), N_t = diag(-rho_k/s_k),
  // s_k = sqrt(1 - rho_k^2). The precision accumulates
  //   sum_t [rows t]' G_t^{-1} [rows t]
  // touching only the (t,t), (t,t-1), (t-1,t-1) blocks.
  Eigen::VectorXd m_diag(ng), n_diag(ng);
  for (int k = 0; k < ng; ++k) {
    const double s = std::sqrt(1.0 - spec.rho[k] * spec.rho[k]);
    m_diag[k] = 1.0 / s;
    n_diag[k] = -spec.rho[k] / s;
  }
  Eigen::MatrixXd q = Eigen::MatrixXd::Zero(d, d);
  for (int t = 0; t < nt; ++t) {
    const Eigen::MatrixXd b = g_inverse(spec.g[static_cast<std::size_t>(t)]);
    const Eigen::VectorXd mt =
        (t == 0) ? Eigen::VectorXd::Ones(ng) : m_diag;
    q.block(t * ng, t * ng, ng, ng) +=
        mt.asDiagonal() * b * mt.asDiagonal();
    if (t > 0) {
      const Eigen::MatrixXd cross =
          n_diag.asDiagonal() * b * mt.asDiagonal();
      q.block((t - 1) * ng, t * ng, ng, ng) += cross;
      q.block(t * ng, (t - 1) * ng, ng, ng) += cross.transpose();
      q.block((t - 1) * ng, (t - 1) * ng, ng, ng) +=
          n_diag.asDiagonal() * b * n_diag.asDiagonal();
    }
  }
  return q;
}

Eigen::VectorXd apply_mixing(const CovarianceSpec& spec,
                             const Eigen::VectorXd& v) {
  const int ng = spec.n_groups();
  const int nt = spec.n_time();
  if (v.size() != spec.dim())
    throw DimensionMismatch("stacked vector length != n_groups * n_time");
  Eigen::VectorXd out(v.size());
  for (int k = 0; k < ng; ++k) {
    const Eigen::MatrixXd l = ar1_cholesky(spec.rho[k], nt);
    Eigen::VectorXd series(nt);
    for (int t = 0; t < nt; ++t) series[t] = v[t * ng + k];
    const Eigen::VectorXd colored = l * series;
    for (int t = 0; t < nt; ++t) out[t * ng + k] = colored[t];
  }
  return out;
}

Eigen::VectorXd whiten_increment(const Eigen::VectorXd& increment,
                                 const Eigen::VectorXd& rho_list) {
  const int ng = static_cast<int>(rho_list.size());
  if (ng < 1 || increment.size() % ng != 0)
    throw DimensionMismatch("increment length not a multiple of n_groups");
  const int nt = static_cast<int>(increment.size()) / ng;
  Eigen::VectorXd out(increment.size());
  Eigen::VectorXd series(nt);
  for (int k = 0; k < ng; ++k) {
    for (int t = 0; t < nt; ++t) series[t] = increment[t * ng + k];
    const Eigen::VectorXd white = ar1_whiten(series, rho_list[k]);
    for (int t = 0; t < nt; ++t) out[t * ng + k] = white[t];
  }
  return out;
}

}  // namespace mstcar
