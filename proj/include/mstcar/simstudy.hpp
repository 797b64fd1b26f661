#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "mstcar/data.hpp"
#include "mstcar/diagnostics.hpp"
#include "mstcar/graph.hpp"
#include "mstcar/sampler.hpp"

namespace mstcar {

// Truth-generation and fitting plan for one simulation study. One covariance
// truth is drawn for the whole study; the latent field is redrawn for every
// replicate, so field coverage is meaningful across replicates.
struct SimDesign {
  enum class PopulationMode { Equal, Table };

  int n_groups = 3;
  int n_time = 10;
  Eigen::VectorXd rho_truth;    // empty => 0.8, 0.85, 0.90, ...
  double g_truth_df = 0.0;      // <= 0 => 2 * n_groups + 1
  double g_truth_scale = 0.0;   // <= 0 => 20 * n_groups (times identity)
  Eigen::VectorXd tau2_truth;   // empty => all 1

  PopulationMode population_mode = PopulationMode::Equal;
  double equal_population = 1e5;     // raw persons per cell
  Eigen::MatrixXd population_table;  // n_sites x dim raw persons; 0 = missing

  int n_replicates = 25;
  std::uint64_t seed = 1;
  bool truth_init = true;
  std::vector<Variant> variants{Variant::Mstcar, Variant::Separable};
  SamplerConfig sampler;  // variant and seed are overridden per fit

  // File references carried for the CLI; run_study ignores them.
  std::string adjacency_path;
  std::string site_map_path;
  std::string population_table_path;

  void apply_defaults();
  void validate(const AdjacencyGraph& graph) const;
};

// One G_t per time point from InvWishart(g_truth_scale * I, g_truth_df);
// rho and tau2 copied from the design.
CovarianceSpec draw_truth(const SimDesign& design, Rng& rng);

// Draw from the intrinsic spatial prior with the null space excluded:
// independent group-time vectors eta ~ N(0, sigma_eta) paired with the
// positive-eigenvalue eigenvectors of D - W, scaled by 1/sqrt(lambda).
// Rows sum to zero over sites for every column.
Eigen::MatrixXd sample_field(const CovarianceSpec& truth,
                             const SpectralBasis& basis, Rng& rng);

// y = field + noise with variance tau2_k / n; zero-population cells are
// marked unobserved and carry the sentinel population.
RateDataset generate_replicate(const SimDesign& design,
                               const CovarianceSpec& truth,
                               const Eigen::MatrixXd& field, Rng& rng);

// Initial state matching the truth (used when truth_init is set).
ModelState truth_state(const RateDataset& data, const CovarianceSpec& truth,
                       const Eigen::MatrixXd& field);

// Seed-stable entry points shared by the in-process study and the command
// line: the same design produces the same truth and replicates either way.
CovarianceSpec study_truth(const SimDesign& design);

struct ReplicateData {
  Eigen::MatrixXd field;
  RateDataset data;
};
ReplicateData study_replicate(const SimDesign& design,
                              const CovarianceSpec& truth,
                              const SpectralBasis& basis, int replicate);

// Chain seed for fitting variant index v of replicate `ell`.
std::uint64_t study_chain_seed(const SimDesign& design, std::size_t variant_index,
                               int replicate);

struct ReplicateRecord {
  int replicate = 0;
  bool ok = false;
  std::string error;
  // covered / total per parameter family, from the first fitted variant
  // that estimates the full covariance (mstcar when present).
  long z_covered = 0, z_total = 0;
  long g_diag_covered = 0, g_diag_total = 0;
  long g_offdiag_covered = 0, g_offdiag_total = 0;
  long tau2_covered = 0, tau2_total = 0;
  long rho_covered = 0, rho_total = 0;
  std::vector<double> dic;  // aligned with the design's variant list
  double imputation_z = 0.0;
  int n_missing = 0;
  double geweke_max_abs_z = 0.0;
};

struct CoverageReport {
  std::vector<Variant> variants;
  int n_replicates = 0;
  int n_failed = 0;
  double z_pct = 0.0;
  double g_diag_pct = 0.0;
  double g_offdiag_pct = 0.0;
  double tau2_pct = 0.0;
  double rho_pct = 0.0;
  // Filled when both mstcar and separable were fitted.
  int mstcar_dic_wins = 0;
  int dic_comparisons = 0;
  double mean_relative_dic_improvement = 0.0;
  std::vector<ReplicateRecord> records;
};

// Full study: per replicate draw the field, generate data, fit every
// requested variant, score 95% interval coverage against the truth and
// record DIC. Replicates run in parallel on derived seeds; results do not
// depend on the thread count. Per-replicate failures are recorded, not
// fatal.
CoverageReport run_study(const SimDesign& design, const AdjacencyGraph& graph,
                         int n_threads = 1);

// Aggregation used by run_study, exposed for the CLI coverage command.
CoverageReport aggregate_records(const std::vector<Variant>& variants,
                                 std::vector<ReplicateRecord> records);

}  // namespace mstcar
