#include "mstcar/rng.hpp"

#include <cmath>
#include <sstream>

#include <Eigen/Cholesky>

#include "mstcar/errors.hpp"

namespace mstcar {

namespace {

std::uint64_t splitmix64(std::uint64_t& x) {
  x += 0x9e3779b97f4a7c15ULL;
  std::uint64_t z = x;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

double Rng::uniform() {
  // 53 random bits mapped into the open interval (0,1).
  const std::uint64_t bits = engine_() >> 11;
  double u = (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
  return u;
}

double Rng::normal() {
  const double u1 = uniform();
  const double u2 = uniform();
  return std::sqrt(-2.0 * std::log(u1)) *
         std::cos(2.0 * 3.14159265358979323846 * u2);
}

double Rng::gamma(double shape) {
  if (!(shape > 0.0)) throw Error("gamma shape must be positive");
  if (shape < 1.0) {
    const double g = gamma(shape + 1.0);
    return g * std::pow(uniform(), 1.0 / shape);
  }
  const double d = shape - 1.0 / 3.0;
  const double c = 1.0 / std::sqrt(9.0 * d);
  for (;;) {
    double x = normal();
    double v = 1.0 + c * x;
    if (v <= 0.0) continue;
    v = v * v * v;
    const double u = uniform();
    const double x2 = x * x;
    if (u < 1.0 - 0.0331 * x2 * x2) return d * v;
    if (std::log(u) < 0.5 * x2 + d * (1.0 - v + std::log(v))) return d * v;
  }
}

double Rng::beta(double a, double b) {
  const double x = gamma(a);
  const double y = gamma(b);
  return x / (x + y);
}

Eigen::VectorXd Rng::normal_vector(Eigen::Index n) {
  Eigen::VectorXd v(n);
  for (Eigen::Index i = 0; i < n; ++i) v[i] = normal();
  return v;
}

std::string Rng::serialize() const {
  std::ostringstream os;
  os << engine_;
  return os.str();
}

void Rng::deserialize(const std::string& state) {
  std::istringstream is(state);
  is >> engine_;
  if (is.fail()) throw IoError("bad RNG state string");
}

Eigen::MatrixXd wishart(Rng& rng, const Eigen::MatrixXd& scale, double df) {
  const Eigen::Index p = scale.rows();
  if (scale.cols() != p) throw DimensionMismatch("Wishart scale not square");
  if (!(df > static_cast<double>(p) - 1.0))
    throw Error("Wishart df must exceed dim - 1");
  Eigen::LLT<Eigen::MatrixXd> llt(scale);
  if (llt.info() != Eigen::Success)
    throw NotPositiveDefinite("Wishart scale matrix");
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(p, p);
  for (Eigen::Index i = 0; i < p; ++i) {
    a(i, i) = std::sqrt(rng.chisq(df - static_cast<double>(i)));
    for (Eigen::Index j = 0; j < i; ++j) a(i, j) = rng.normal();
  }
  const Eigen::MatrixXd l = llt.matrixL() * a;
  return l * l.transpose();
}

Eigen::MatrixXd inverse_wishart(Rng& rng, const Eigen::MatrixXd& scale,
                                double df) {
  const Eigen::Index p = scale.rows();
  Eigen::LLT<Eigen::MatrixXd> llt(scale);
  if (llt.info() != Eigen::Success)
    throw NotPositiveDefinite("inverse Wishart scale matrix");
  const Eigen::MatrixXd scale_inv =
      llt.solve(Eigen::MatrixXd::Identity(p, p));
  const Eigen::MatrixXd w = wishart(rng, scale_inv, df);
  Eigen::LLT<Eigen::MatrixXd> wllt(w);
  if (wllt.info() != Eigen::Success)
    throw NotPositiveDefinite("Wishart draw not invertible");
  Eigen::MatrixXd x = wllt.solve(Eigen::MatrixXd::Identity(p, p));
  // Kill the asymmetry left by the solve so downstream Cholesky never sees it.
  return 0.5 * (x + x.transpose());
}

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream,
                          std::uint64_t index) {
  std::uint64_t s = master;
  std::uint64_t h = splitmix64(s);
  s ^= stream * 0x2545f4914f6cdd1dULL;
  h ^= splitmix64(s);
  s ^= index + 0x632be59bd9b4e019ULL;
  h ^= splitmix64(s);
  return h;
}

}  // namespace mstcar
