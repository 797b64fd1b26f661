#include <doctest.h>

#include <cmath>

#include "mstcar/simstudy.hpp"
#include "test_util.hpp"

using namespace mstcar;

namespace {

AdjacencyGraph grid5() {
  // 5 sites in a cycle plus one chord.
  return AdjacencyGraph(5, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 0}, {1, 3}});
}

}  // namespace

TEST_SUITE("simstudy") {

TEST_CASE("design defaults follow the reference truth generation") {
  SimDesign d;
  d.n_groups = 3;
  d.apply_defaults();
  CHECK(d.g_truth_df == doctest::Approx(7.0));
  CHECK(d.g_truth_scale == doctest::Approx(60.0));
  REQUIRE(d.rho_truth.size() == 3);
  CHECK(d.rho_truth[0] == doctest::Approx(0.8));
  CHECK(d.rho_truth[1] == doctest::Approx(0.85));
  CHECK(d.rho_truth[2] == doctest::Approx(0.9));
  CHECK((d.tau2_truth.array() == 1.0).all());
}

TEST_CASE("truth draw is reproducible and respects the design") {
  SimDesign d;
  d.n_groups = 3;
  d.n_time = 4;
  d.apply_defaults();
  Rng rng1(99), rng2(99);
  const auto truth1 = draw_truth(d, rng1);
  const auto truth2 = draw_truth(d, rng2);
  REQUIRE(truth1.g.size() == 4);
  CHECK(truth1.rho == d.rho_truth);
  CHECK(truth1.tau2 == d.tau2_truth);
  for (int t = 0; t < 4; ++t)
    CHECK(truth1.g[static_cast<std::size_t>(t)] ==
          truth2.g[static_cast<std::size_t>(t)]);
}

TEST_CASE("sampled field is orthogonal to the constant vector") {
  Rng rng(71);
  const auto graph = grid5();
  const auto basis = spectral_basis(graph);
  const CovarianceSpec truth = test::random_spec(rng, 2, 3);
  for (int rep = 0; rep < 20; ++rep) {
    const Eigen::MatrixXd field = sample_field(truth, basis, rng);
    for (int c = 0; c < field.cols(); ++c)
      CHECK(std::abs(field.col(c).sum()) < 1e-9);
  }
}

TEST_CASE("two-site field is antisymmetric") {
  Rng rng(72);
  const auto graph = test::path_graph(2);
  const auto basis = spectral_basis(graph);
  const CovarianceSpec truth = test::random_spec(rng, 2, 2);
  for (int rep = 0; rep < 10; ++rep) {
    const Eigen::MatrixXd field = sample_field(truth, basis, rng);
    CHECK((field.row(0) + field.row(1)).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("field quadratic form matches its chi-square moment") {
  // For a draw from the intrinsic density, the Laplacian quadratic form with
  // the generating precision is chi-square with (n_sites - 1) * dim degrees
  // of freedom.
  Rng rng(73);
  const auto graph = grid5();
  const auto basis = spectral_basis(graph);
  const CovarianceSpec truth = test::random_spec(rng, 2, 2);
  const Eigen::MatrixXd precision = sigma_eta_precision(truth);
  const int n_draws = 5000;
  double mean_q = 0.0;
  for (int rep = 0; rep < n_draws; ++rep) {
    const Eigen::MatrixXd field = sample_field(truth, basis, rng);
    mean_q += laplacian_quadratic_form(graph, field, precision);
  }
  mean_q /= n_draws;
  const double expected = (5 - 1) * 4;  // (n_sites - 1) * n_groups * n_time
  CHECK(mean_q == doctest::Approx(expected).epsilon(0.05));
}

TEST_CASE("replicates honor the population mode") {
  Rng rng(74);
  const auto graph = grid5();
  SimDesign d;
  d.n_groups = 2;
  d.n_time = 3;
  d.apply_defaults();
  d.equal_population = 4e5;  // 4 units: noise sd = tau / 2
  const auto basis = spectral_basis(graph);
  CovarianceSpec truth = test::random_spec(rng, 2, 3);
  const Eigen::MatrixXd field = sample_field(truth, basis, rng);

  // Zero noise reproduces the field exactly.
  truth.tau2.setZero();
  const RateDataset noiseless = generate_replicate(d, truth, field, rng);
  CHECK((noiseless.y - field).cwiseAbs().maxCoeff() == 0.0);
  CHECK((noiseless.pop.array() == 4.0).all());
  CHECK(noiseless.observed.all());

  // A population table with zeros marks those cells unobserved.
  d.population_mode = SimDesign::PopulationMode::Table;
  d.population_table =
      Eigen::MatrixXd::Constant(5, 6, 2e5);
  d.population_table(3, 4) = 0.0;
  truth.tau2.setConstant(1.0);
  const RateDataset with_gap = generate_replicate(d, truth, field, rng);
  CHECK_FALSE(with_gap.observed(3, 4));
  CHECK(with_gap.pop(3, 4) == RateDataset::kSentinelPop);
  CHECK(with_gap.observed(0, 0));
  CHECK(with_gap.pop(0, 0) == doctest::Approx(2.0));
}

TEST_CASE("truth state starts the chain at the generating values") {
  Rng rng(75);
  const auto graph = grid5();
  SimDesign d;
  d.n_groups = 2;
  d.n_time = 2;
  d.apply_defaults();
  d.population_mode = SimDesign::PopulationMode::Table;
  d.population_table = Eigen::MatrixXd::Constant(5, 4, 1e5);
  d.population_table(2, 1) = 0.0;
  const auto basis = spectral_basis(graph);
  const CovarianceSpec truth = test::random_spec(rng, 2, 2);
  const Eigen::MatrixXd field = sample_field(truth, basis, rng);
  const RateDataset data = generate_replicate(d, truth, field, rng);
  const ModelState init = truth_state(data, truth, field);
  CHECK(init.z == field);
  CHECK(init.beta.cwiseAbs().maxCoeff() == 0.0);
  CHECK(init.y(2, 1) == field(2, 1));  // imputation seeded at the field value
  init.validate(data);
}

TEST_CASE("a small study produces a complete report") {
  const auto graph = grid5();
  SimDesign d;
  d.n_groups = 2;
  d.n_time = 2;
  d.n_replicates = 3;
  d.seed = 314;
  d.truth_init = true;
  d.sampler.n_iterations = 120;
  d.sampler.burn_in = 60;
  d.sampler.thin = 2;
  d.apply_defaults();

  const auto report = run_study(d, graph, 2);
  CHECK(report.n_replicates == 3);
  CHECK(report.n_failed == 0);
  CHECK(report.dic_comparisons == 3);
  CHECK(report.records.size() == 3);
  for (const auto& rec : report.records) {
    CHECK(rec.ok);
    CHECK(rec.z_total == 5 * 4);
    CHECK(rec.g_diag_total == 2 * 2);
    CHECK(rec.g_offdiag_total == 2);
    CHECK(rec.tau2_total == 2);
    CHECK(rec.rho_total == 2);
    CHECK(rec.dic.size() == 2);
    CHECK(std::isfinite(rec.dic[0]));
    CHECK(std::isfinite(rec.dic[1]));
  }
  for (double pct : {report.z_pct, report.g_diag_pct, report.g_offdiag_pct,
                     report.tau2_pct, report.rho_pct}) {
    CHECK(pct >= 0.0);
    CHECK(pct <= 100.0);
  }

  // The same study is reproducible and does not depend on the thread count.
  const auto again = run_study(d, graph, 1);
  REQUIRE(again.records.size() == report.records.size());
  for (std::size_t i = 0; i < report.records.size(); ++i) {
    CHECK(again.records[i].dic == report.records[i].dic);
    CHECK(again.records[i].z_covered == report.records[i].z_covered);
  }
}

TEST_CASE("per-replicate failures are recorded, not fatal") {
  const auto graph = grid5();
  SimDesign d;
  d.n_groups = 2;
  d.n_time = 2;
  d.n_replicates = 2;
  d.seed = 11;
  d.truth_init = true;
  d.sampler.n_iterations = 40;
  d.sampler.burn_in = 20;
  d.apply_defaults();
  // A population table of all zeros leaves no observed cells, which makes
  // every fit fail while the study itself completes.
  d.population_mode = SimDesign::PopulationMode::Table;
  d.population_table = Eigen::MatrixXd::Zero(5, 4);
  const auto report = run_study(d, graph, 1);
  CHECK(report.n_failed == 2);
  for (const auto& rec : report.records) {
    CHECK_FALSE(rec.ok);
    CHECK_FALSE(rec.error.empty());
  }
}

}  // TEST_SUITE
