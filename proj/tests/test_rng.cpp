#include <doctest.h>

#include "mstcar/rng.hpp"
#include "test_util.hpp"

using namespace mstcar;

TEST_SUITE("rng") {

TEST_CASE("same seed reproduces the sequence") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) {
    CHECK(a.uniform() == b.uniform());
    CHECK(a.normal() == b.normal());
    CHECK(a.gamma(2.5) == b.gamma(2.5));
  }
}

TEST_CASE("serialize round-trips mid-stream") {
  Rng a(7);
  for (int i = 0; i < 37; ++i) a.normal();
  const std::string state = a.serialize();
  Rng b(1);
  b.deserialize(state);
  for (int i = 0; i < 200; ++i) {
    CHECK(a.uniform() == b.uniform());
    CHECK(a.gamma(0.7) == b.gamma(0.7));
  }
}

TEST_CASE("gamma and beta moments") {
  Rng rng(3);
  const int n = 200000;
  double mean = 0.0;
  for (int i = 0; i < n; ++i) mean += rng.gamma(3.0);
  mean /= n;
  CHECK(mean == doctest::Approx(3.0).epsilon(0.02));

  double bmean = 0.0;
  for (int i = 0; i < n; ++i) bmean += rng.beta(9.0, 1.0);
  bmean /= n;
  CHECK(bmean == doctest::Approx(0.9).epsilon(0.01));
}

TEST_CASE("wishart mean is df * scale") {
  Rng rng(11);
  const Eigen::MatrixXd scale = test::random_spd(rng, 3);
  const double df = 8.0;
  Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(3, 3);
  const int n = 20000;
  for (int i = 0; i < n; ++i) mean += wishart(rng, scale, df);
  mean /= n;
  CHECK((mean - df * scale).cwiseAbs().maxCoeff() <
        0.05 * df * scale.cwiseAbs().maxCoeff());
}

TEST_CASE("inverse wishart mean is scale / (df - p - 1)") {
  Rng rng(13);
  const Eigen::MatrixXd scale = test::random_spd(rng, 2);
  const double df = 9.0;
  Eigen::MatrixXd mean = Eigen::MatrixXd::Zero(2, 2);
  const int n = 40000;
  for (int i = 0; i < n; ++i) mean += inverse_wishart(rng, scale, df);
  mean /= n;
  const Eigen::MatrixXd expected = scale / (df - 2 - 1);
  CHECK((mean - expected).cwiseAbs().maxCoeff() <
        0.05 * expected.cwiseAbs().maxCoeff());
}

TEST_CASE("derived seeds differ across streams and indices") {
  const auto s0 = derive_seed(99, 0, 0);
  CHECK(s0 != derive_seed(99, 0, 1));
  CHECK(s0 != derive_seed(99, 1, 0));
  CHECK(s0 == derive_seed(99, 0, 0));
  CHECK(derive_seed(98, 0, 0) != s0);
}

}  // TEST_SUITE
