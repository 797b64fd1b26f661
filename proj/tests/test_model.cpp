#include <doctest.h>

#include <cmath>

#include <Eigen/Dense>

#include "mstcar/model.hpp"
#include "test_util.hpp"

using namespace mstcar;

namespace {

constexpr double kLogTwoPi = 1.8378770664093454836;

struct Instance {
  RateDataset data;
  ModelState state;
};

// Fully observed random instance with the intercept design.
Instance random_instance(Rng& rng, int n_sites, int ng, int nt) {
  Instance inst;
  inst.data = RateDataset::with_intercept_design(n_sites, ng, nt);
  for (int i = 0; i < n_sites; ++i)
    for (int c = 0; c < inst.data.dim(); ++c) {
      inst.data.y(i, c) = 3.0 * rng.normal();
      inst.data.pop(i, c) = 0.5 + rng.uniform();
    }
  inst.state.beta = Eigen::MatrixXd::NullaryExpr(
      ng, nt, [&](Eigen::Index, Eigen::Index) { return rng.normal(); });
  inst.state.z = Eigen::MatrixXd::NullaryExpr(
      n_sites, ng * nt,
      [&](Eigen::Index, Eigen::Index) { return rng.normal(); });
  inst.state.cov = test::random_spec(rng, ng, nt);
  inst.state.y = inst.data.y;
  return inst;
}

double dense_gaussian_logpdf(const Eigen::VectorXd& x,
                             const Eigen::VectorXd& mean,
                             const Eigen::MatrixXd& cov) {
  const Eigen::Index d = x.size();
  Eigen::LLT<Eigen::MatrixXd> llt(cov);
  REQUIRE(llt.info() == Eigen::Success);
  const double logdet =
      2.0 * Eigen::MatrixXd(llt.matrixL()).diagonal().array().log().sum();
  const Eigen::VectorXd r = x - mean;
  return -0.5 * (d * kLogTwoPi + logdet + r.dot(llt.solve(r)));
}

// Independent route for the inverse Wishart density check: Wishart density
// of the inverse plus the symmetric-matrix inversion Jacobian.
double wishart_logpdf(const Eigen::MatrixXd& x, const Eigen::MatrixXd& scale,
                      double df) {
  const int p = static_cast<int>(x.rows());
  const double logdet_x = std::log(x.determinant());
  const double logdet_scale = std::log(scale.determinant());
  const double trace_term = scale.inverse().cwiseProduct(x).sum();
  return 0.5 * (df - p - 1.0) * logdet_x - 0.5 * trace_term -
         0.5 * df * p * std::log(2.0) - 0.5 * df * logdet_scale -
         log_multivariate_gamma(p, 0.5 * df);
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("likelihood closed forms") {
  RateDataset data = RateDataset::with_intercept_design(1, 1, 1);
  ModelState state;
  state.beta = Eigen::MatrixXd::Constant(1, 1, 2.0);
  state.z = Eigen::MatrixXd::Constant(1, 1, -1.0);
  state.cov.g.assign(1, Eigen::MatrixXd::Identity(1, 1));
  state.cov.rho = Eigen::VectorXd::Zero(1);
  state.cov.tau2 = Eigen::VectorXd::Ones(1);

  // Zero residual with unit variance.
  data.y(0, 0) = 1.0;  // x'beta + z = 2 - 1
  data.pop(0, 0) = 1.0;
  state.y = data.y;
  CHECK(log_likelihood(data, state, CellSet::All) ==
        doctest::Approx(-0.5 * kLogTwoPi).epsilon(1e-14));

  // Residual 1, tau2 = 1, n = 4: variance 0.25.
  data.y(0, 0) = 2.0;
  data.pop(0, 0) = 4.0;
  state.y = data.y;
  CHECK(log_likelihood(data, state, CellSet::All) ==
        doctest::Approx(-0.5 * std::log(2.0 * 3.14159265358979323846 * 0.25) -
                        2.0)
            .epsilon(1e-14));
}

TEST_CASE("likelihood matches per-cell summation oracle") {
  Rng rng(21);
  auto inst = random_instance(rng, 3, 1, 1);
  double expected = 0.0;
  for (int i = 0; i < 3; ++i) {
    const double var = inst.state.cov.tau2[0] / inst.data.pop(i, 0);
    const double resid =
        inst.state.y(i, 0) - inst.state.beta(0, 0) - inst.state.z(i, 0);
    expected += -0.5 * (kLogTwoPi + std::log(var) + resid * resid / var);
  }
  CHECK(log_likelihood(inst.data, inst.state, CellSet::All) ==
        doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("likelihood decomposes over the observed partition") {
  Rng rng(22);
  auto inst = random_instance(rng, 6, 2, 3);
  inst.data.observed(1, 2) = false;
  inst.data.observed(4, 0) = false;
  inst.data.pop(1, 2) = RateDataset::kSentinelPop;
  inst.data.pop(4, 0) = RateDataset::kSentinelPop;
  const double full = log_likelihood(inst.data, inst.state, CellSet::All);
  const double obs = log_likelihood(inst.data, inst.state, CellSet::Observed);
  const double unobs =
      log_likelihood(inst.data, inst.state, CellSet::Unobserved);
  CHECK(full == obs + unobs);  // exact: identical summation order per branch
}

TEST_CASE("spatial prior closed form at z = 0 and constant fields") {
  Rng rng(23);
  const auto graph = test::square_with_diagonal();
  const CovarianceSpec spec = test::random_spec(rng, 2, 2);
  const Eigen::MatrixXd zero = Eigen::MatrixXd::Zero(4, 4);
  const double at_zero = mstcar_log_prior(zero, graph, spec);
  CHECK(at_zero ==
        doctest::Approx(-1.5 * sigma_eta_logdet(spec)).epsilon(1e-12));

  Eigen::MatrixXd constant(4, 4);
  const Eigen::VectorXd v = rng.normal_vector(4);
  for (int i = 0; i < 4; ++i) constant.row(i) = v.transpose();
  CHECK(mstcar_log_prior(constant, graph, spec) ==
        doctest::Approx(at_zero).epsilon(1e-12));
}

TEST_CASE("spatial prior is shift invariant") {
  Rng rng(24);
  const auto graph = test::square_with_diagonal();
  const CovarianceSpec spec = test::random_spec(rng, 2, 3);
  Eigen::MatrixXd z = Eigen::MatrixXd::NullaryExpr(
      4, 6, [&](Eigen::Index, Eigen::Index) { return rng.normal(); });
  const double before = mstcar_log_prior(z, graph, spec);
  const Eigen::VectorXd shift = rng.normal_vector(6);
  for (int i = 0; i < 4; ++i) z.row(i) += shift.transpose();
  CHECK(mstcar_log_prior(z, graph, spec) ==
        doctest::Approx(before).epsilon(1e-10));
}

TEST_CASE("spatial prior matches the dense kronecker-precision oracle") {
  Rng rng(25);
  const auto graph = test::square_with_diagonal();
  const CovarianceSpec spec = test::random_spec(rng, 2, 2);
  const Eigen::MatrixXd z = Eigen::MatrixXd::NullaryExpr(
      4, 4, [&](Eigen::Index, Eigen::Index) { return rng.normal(); });
  const Eigen::MatrixXd sigma_inv = assemble_sigma_eta(spec).inverse();
  const Eigen::MatrixXd dense = test::kronecker(graph.laplacian(), sigma_inv);
  Eigen::VectorXd stacked(16);
  for (int i = 0; i < 4; ++i) stacked.segment(4 * i, 4) = z.row(i);
  const double expected = -0.5 * 3.0 * sigma_eta_logdet(spec) -
                          0.5 * stacked.dot(dense * stacked);
  CHECK(mstcar_log_prior(z, graph, spec) ==
        doctest::Approx(expected).epsilon(1e-9));
}

TEST_CASE("conditional parameters for simple neighborhoods") {
  Rng rng(26);
  const CovarianceSpec spec = test::random_spec(rng, 2, 2);
  const Eigen::MatrixXd sigma = assemble_sigma_eta(spec);

  // Two sites: the conditional mean is the other site's block.
  const auto two = test::path_graph(2);
  Eigen::MatrixXd z2 = Eigen::MatrixXd::NullaryExpr(
      2, 4, [&](Eigen::Index, Eigen::Index) { return rng.normal(); });
  const auto cond2 = conditional_z_params(0, z2, two, spec);
  CHECK((cond2.mean.transpose() - z2.row(1)).cwiseAbs().maxCoeff() < 1e-14);
  CHECK((cond2.covariance - sigma).cwiseAbs().maxCoeff() < 1e-12);

  // Antisymmetric neighbors cancel; the middle of a 3-path halves sigma.
  const auto path3 = test::path_graph(3);
  Eigen::MatrixXd z3(3, 4);
  const Eigen::VectorXd v = rng.normal_vector(4);
  z3.row(0) = v.transpose();
  z3.row(1).setZero();
  z3.row(2) = -v.transpose();
  const auto cond3 = conditional_z_params(1, z3, path3, spec);
  CHECK(cond3.mean.cwiseAbs().maxCoeff() < 1e-14);
  CHECK((cond3.covariance - 0.5 * sigma).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("brook consistency: joint differences equal conditional differences") {
  Rng rng(27);
  const auto graph = test::square_with_diagonal();
  const CovarianceSpec spec = test::random_spec(rng, 2, 2);
  Eigen::MatrixXd z = Eigen::MatrixXd::NullaryExpr(
      4, 4, [&](Eigen::Index, Eigen::Index) { return rng.normal(); });
  for (int site = 0; site < 4; ++site) {
    const auto cond = conditional_z_params(site, z, graph, spec);
    const Eigen::VectorXd a = rng.normal_vector(4);
    const Eigen::VectorXd b = rng.normal_vector(4);
    Eigen::MatrixXd za = z, zb = z;
    za.row(site) = a.transpose();
    zb.row(site) = b.transpose();
    const double joint_diff = mstcar_log_prior(za, graph, spec) -
                              mstcar_log_prior(zb, graph, spec);
    const double cond_diff =
        dense_gaussian_logpdf(a, cond.mean, cond.covariance) -
        dense_gaussian_logpdf(b, cond.mean, cond.covariance);
    CHECK(joint_diff == doctest::Approx(cond_diff).epsilon(1e-8));
  }
}

TEST_CASE("beta density closed forms") {
  CHECK(log_beta_density(0.37, 1.0, 1.0) == doctest::Approx(0.0));
  CHECK(log_beta_density(0.9, 9.0, 1.0) ==
        doctest::Approx(8.0 * std::log(0.9) + std::log(9.0)).epsilon(1e-12));
}

TEST_CASE("inverse wishart density agrees with the wishart route") {
  Rng rng(28);
  for (int rep = 0; rep < 5; ++rep) {
    const int p = 2 + static_cast<int>(rng.uniform() * 2);
    const Eigen::MatrixXd x = test::random_spd(rng, p);
    const Eigen::MatrixXd scale = test::random_spd(rng, p);
    const double df = p + 1.5 + 2.0 * rng.uniform();
    const double direct = log_inverse_wishart_density(x, scale, df);
    const double via_wishart =
        wishart_logpdf(x.inverse(), scale.inverse(), df) -
        (p + 1.0) * std::log(x.determinant());
    CHECK(direct == doctest::Approx(via_wishart).epsilon(1e-10));
  }
}

TEST_CASE("hyperprior assembles the three blocks") {
  Rng rng(29);
  CovarianceSpec spec = test::random_spec(rng, 2, 2);
  PriorConfig prior = PriorConfig::defaults(2);
  double expected = 0.0;
  for (int k = 0; k < 2; ++k) {
    expected += log_beta_density(spec.rho[k], 9.0, 1.0);
    expected += -0.5 * std::log(spec.tau2[k]);
  }
  for (const auto& gt : spec.g)
    expected += log_inverse_wishart_density(gt, prior.g_scale, prior.g_df);
  CHECK(log_hyperpriors(spec, prior) ==
        doctest::Approx(expected).epsilon(1e-12));
}

}  // TEST_SUITE
