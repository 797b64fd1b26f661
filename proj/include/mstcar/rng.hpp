#pragma once

#include <cstdint>
#include <random>
#include <string>

#include <Eigen/Core>

namespace mstcar {

// All stochastic code in the library draws through this wrapper. The draw
// functions keep no state outside the mt19937_64 engine (no cached spare
// normal, no std::*_distribution objects), so serialize()/deserialize()
// round-trips the complete RNG state and a resumed chain reproduces the
// original draw sequence bit for bit.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  // U(0,1) on [2^-53, 1 - 2^-53]; never returns exactly 0 or 1.
  double uniform();

  // Box-Muller, consuming two uniforms per call.
  double normal();

  // Gamma(shape, 1) via Marsaglia-Tsang, with the boost trick for shape < 1.
  double gamma(double shape);

  double chisq(double df) { return 2.0 * gamma(0.5 * df); }
  double beta(double a, double b);

  Eigen::VectorXd normal_vector(Eigen::Index n);

  std::string serialize() const;
  void deserialize(const std::string& state);

 private:
  std::mt19937_64 engine_;
};

// Wishart(scale, df) via the Bartlett decomposition; df > dim - 1.
Eigen::MatrixXd wishart(Rng& rng, const Eigen::MatrixXd& scale, double df);

// InvWishart(scale, df): inverse of a Wishart(scale^{-1}, df) draw.
Eigen::MatrixXd inverse_wishart(Rng& rng, const Eigen::MatrixXd& scale,
                                double df);

// Deterministic seed derivation so that parallel work items (replicates,
// chains) get independent streams from one master seed, independent of
// scheduling order.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t stream,
                          std::uint64_t index);

}  // namespace mstcar
