#include "mstcar/simstudy.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <thread>

#include <Eigen/Cholesky>

namespace mstcar {

namespace {

// Stream tags for derive_seed so the truth, each replicate's data, and each
// fit consume independent RNG streams.
constexpr std::uint64_t kTruthStream = 0x7472757468ULL;
constexpr std::uint64_t kFieldStream = 0x6669656c64ULL;
constexpr std::uint64_t kChainStream = 0x636861696eULL;

}  // namespace

void SimDesign::apply_defaults() {
  if (rho_truth.size() == 0) {
    rho_truth.resize(n_groups);
    for (int k = 0; k < n_groups; ++k)
      rho_truth[k] = std::min(0.8 + 0.05 * k, 0.95);
  }
  if (g_truth_df <= 0.0) g_truth_df = 2.0 * n_groups + 1.0;
  if (g_truth_scale <= 0.0) g_truth_scale = 20.0 * n_groups;
  if (tau2_truth.size() == 0) tau2_truth = Eigen::VectorXd::Ones(n_groups);
}

void SimDesign::validate(const AdjacencyGraph& graph) const {
  if (n_groups < 1 || n_time < 1)
    throw ConfigError("design needs n_groups, n_time >= 1");
  if (n_replicates < 1) throw ConfigError("need n_replicates >= 1");
  if (rho_truth.size() != n_groups || tau2_truth.size() != n_groups)
    throw DimensionMismatch("rho/tau2 truth lengths must equal n_groups");
  if (!(g_truth_df > n_groups - 1.0))
    throw ConfigError("g_truth_df must exceed n_groups - 1");
  if (!(g_truth_scale > 0.0)) throw ConfigError("g_truth_scale must be > 0");
  if (population_mode == PopulationMode::Equal) {
    if (!(equal_population > 0.0))
      throw ConfigError("equal_population must be > 0");
  } else {
    if (population_table.rows() != graph.n_sites() ||
        population_table.cols() != n_groups * n_time)
      throw DimensionMismatch(
          "population table must be n_sites x (n_groups * n_time)");
    if ((population_table.array() < 0.0).any())
      throw ConfigError("population table entries must be >= 0");
  }
  if (variants.empty()) throw ConfigError("at least one variant required");
  sampler.validate();
}

CovarianceSpec draw_truth(const SimDesign& design, Rng& rng) {
  CovarianceSpec truth;
  const Eigen::MatrixXd scale =
      design.g_truth_scale *
      Eigen::MatrixXd::Identity(design.n_groups, design.n_groups);
  truth.g.reserve(static_cast<std::size_t>(design.n_time));
  for (int t = 0; t < design.n_time; ++t)
    truth.g.push_back(inverse_wishart(rng, scale, design.g_truth_df));
  truth.rho = design.rho_truth;
  truth.tau2 = design.tau2_truth;
  truth.validate();
  return truth;
}

Eigen::MatrixXd sample_field(const CovarianceSpec& truth,
                             const SpectralBasis& basis, Rng& rng) {
  if (basis.n_zero != 1)
    throw RankDeficiency("expected exactly one zero eigenvalue, found " +
                         std::to_string(basis.n_zero));
  const int n_sites = static_cast<int>(basis.eigenvalues.size());
  const int ng = truth.n_groups();
  const int nt = truth.n_time();
  const int d = ng * nt;

  std::vector<Eigen::LLT<Eigen::MatrixXd>> g_chol;
  g_chol.reserve(static_cast<std::size_t>(nt));
  for (const auto& gt : truth.g) {
    g_chol.emplace_back(gt);
    if (g_chol.back().info() != Eigen::Success)
      throw NotPositiveDefinite("G_t in field truth");
  }

  Eigen::MatrixXd z = Eigen::MatrixXd::Zero(n_sites, d);
  Eigen::VectorXd u(d);
  for (int idx = basis.n_zero; idx < n_sites; ++idx) {
    // eta ~ N(0, sigma_eta) through the factored form.
    for (int t = 0; t < nt; ++t)
      u.segment(t * ng, ng) =
          Eigen::MatrixXd(g_chol[static_cast<std::size_t>(t)].matrixL()) *
          rng.normal_vector(ng);
    const Eigen::VectorXd eta = apply_mixing(truth, u);
    const double weight = 1.0 / std::sqrt(basis.eigenvalues[idx]);
    z += (weight * basis.eigenvectors.col(idx)) * eta.transpose();
  }
  return z;
}

RateDataset generate_replicate(const SimDesign& design,
                               const CovarianceSpec& truth,
                               const Eigen::MatrixXd& field, Rng& rng) {
  const int n_sites = static_cast<int>(field.rows());
  RateDataset data =
      RateDataset::with_intercept_design(n_sites, design.n_groups,
                                         design.n_time);
  for (int t = 0; t < design.n_time; ++t)
    for (int k = 0; k < design.n_groups; ++k) {
      const int c = data.col(k, t);
      for (int i = 0; i < n_sites; ++i) {
        const double raw =
            design.population_mode == SimDesign::PopulationMode::Equal
                ? design.equal_population
                : design.population_table(i, c);
        if (raw <= 0.0) {
          data.observed(i, c) = false;
          data.pop(i, c) = RateDataset::kSentinelPop;
          data.y(i, c) = 0.0;
          continue;
        }
        data.pop(i, c) = raw / 1e5;
        const double sd = std::sqrt(truth.tau2[k] / data.pop(i, c));
        data.y(i, c) = field(i, c) + sd * rng.normal();
      }
    }
  return data;
}

ModelState truth_state(const RateDataset& data, const CovarianceSpec& truth,
                       const Eigen::MatrixXd& field) {
  ModelState state;
  state.beta = Eigen::MatrixXd::Zero(data.n_groups, data.p);
  state.z = field;
  state.cov = truth;
  state.y = data.y;
  for (auto [i, c] : data.unobserved_cells()) state.y(i, c) = field(i, c);
  return state;
}

CovarianceSpec study_truth(const SimDesign& design) {
  Rng rng(derive_seed(design.seed, kTruthStream, 0));
  return draw_truth(design, rng);
}

ReplicateData study_replicate(const SimDesign& design,
                              const CovarianceSpec& truth,
                              const SpectralBasis& basis, int replicate) {
  Rng rng(derive_seed(design.seed, kFieldStream,
                      static_cast<std::uint64_t>(replicate)));
  ReplicateData out;
  out.field = sample_field(truth, basis, rng);
  out.data = generate_replicate(design, truth, out.field, rng);
  return out;
}

std::uint64_t study_chain_seed(const SimDesign& design,
                               std::size_t variant_index, int replicate) {
  return derive_seed(design.seed, kChainStream + variant_index,
                     static_cast<std::uint64_t>(replicate));
}

namespace {

struct FamilyTally {
  long covered = 0;
  long total = 0;
  void add(double truth, const IntervalSummary& s) {
    ++total;
    if (s.covers(truth)) ++covered;
  }
};

ReplicateRecord run_replicate(int ell, const SimDesign& design,
                              const AdjacencyGraph& graph,
                              const SpectralBasis& basis,
                              const CovarianceSpec& truth) {
  ReplicateRecord rec;
  rec.replicate = ell;
  const ReplicateData replicate = study_replicate(design, truth, basis, ell);
  const Eigen::MatrixXd& field = replicate.field;
  const RateDataset& data = replicate.data;
  const PriorConfig prior = PriorConfig::defaults(design.n_groups);
  const ModelState init = truth_state(data, truth, field);

  rec.dic.assign(design.variants.size(), 0.0);
  bool scored_coverage = false;
  for (std::size_t v = 0; v < design.variants.size(); ++v) {
    SamplerConfig config = design.sampler;
    config.variant = design.variants[v];
    config.seed = study_chain_seed(design, v, ell);
    const PosteriorSamples samples = run_chain(
        data, graph, prior, config, design.truth_init ? &init : nullptr);
    rec.dic[v] = dic(samples, data).dic;

    const bool full_covariance = config.variant == Variant::Mstcar;
    if (!full_covariance || scored_coverage) continue;
    scored_coverage = true;

    const int n = samples.n_draws();
    std::vector<double> buf(static_cast<std::size_t>(n));
    const auto interval_of = [&](auto&& getter) {
      for (int s = 0; s < n; ++s) buf[static_cast<std::size_t>(s)] = getter(s);
      return summarize_draws(buf);
    };

    FamilyTally z_tally, gd_tally, go_tally, t2_tally, rho_tally;
    for (int i = 0; i < data.n_sites; ++i)
      for (int c = 0; c < data.dim(); ++c)
        z_tally.add(field(i, c), interval_of([&](int s) {
                      return samples.z[static_cast<std::size_t>(s)](i, c);
                    }));
    for (int t = 0; t < design.n_time; ++t)
      for (int k = 0; k < design.n_groups; ++k) {
        gd_tally.add(truth.g[static_cast<std::size_t>(t)](k, k),
                     interval_of([&](int s) {
                       return samples.g[static_cast<std::size_t>(s)]
                           [static_cast<std::size_t>(t)](k, k);
                     }));
        for (int k2 = k + 1; k2 < design.n_groups; ++k2)
          go_tally.add(truth.g[static_cast<std::size_t>(t)](k, k2),
                       interval_of([&](int s) {
                         return samples.g[static_cast<std::size_t>(s)]
                             [static_cast<std::size_t>(t)](k, k2);
                       }));
      }
    for (int k = 0; k < design.n_groups; ++k) {
      t2_tally.add(truth.tau2[k], interval_of([&](int s) {
                     return samples.tau2[static_cast<std::size_t>(s)][k];
                   }));
      rho_tally.add(truth.rho[k], interval_of([&](int s) {
                      return samples.rho[static_cast<std::size_t>(s)][k];
                    }));
    }
    rec.z_covered = z_tally.covered;
    rec.z_total = z_tally.total;
    rec.g_diag_covered = gd_tally.covered;
    rec.g_diag_total = gd_tally.total;
    rec.g_offdiag_covered = go_tally.covered;
    rec.g_offdiag_total = go_tally.total;
    rec.tau2_covered = t2_tally.covered;
    rec.tau2_total = t2_tally.total;
    rec.rho_covered = rho_tally.covered;
    rec.rho_total = rho_tally.total;

    // Imputation calibration: the standardized imputation residuals are
    // exact standard normals by construction, so the pooled mean times
    // sqrt(count) is a unit-variance z score.
    rec.n_missing = static_cast<int>(samples.missing_cells.size());
    if (rec.n_missing > 0) {
      double sum = 0.0;
      long count = 0;
      for (int s = 0; s < n; ++s) {
        const auto& beta = samples.beta[static_cast<std::size_t>(s)];
        const auto& z = samples.z[static_cast<std::size_t>(s)];
        const double* yu =
            samples.y_u[static_cast<std::size_t>(s)].data();
        for (std::size_t m = 0; m < samples.missing_cells.size(); ++m) {
          const auto [i, c] = samples.missing_cells[m];
          const int t = c / design.n_groups;
          const int k = c % design.n_groups;
          const double mean = data.fixed_effect(i, k, t, beta) + z(i, c);
          const double sd = std::sqrt(
              samples.tau2[static_cast<std::size_t>(s)][k] / data.pop(i, c));
          sum += (yu[m] - mean) / sd;
          ++count;
        }
      }
      rec.imputation_z =
          sum / std::sqrt(static_cast<double>(std::max<long>(count, 1)));
    }

    // Stationarity screen on the scalar traces.
    double worst = 0.0;
    std::vector<double> trace(static_cast<std::size_t>(n));
    for (int k = 0; k < design.n_groups; ++k) {
      for (int s = 0; s < n; ++s)
        trace[static_cast<std::size_t>(s)] =
            samples.tau2[static_cast<std::size_t>(s)][k];
      worst = std::max(worst, std::abs(geweke_z(trace)));
      for (int s = 0; s < n; ++s)
        trace[static_cast<std::size_t>(s)] =
            samples.rho[static_cast<std::size_t>(s)][k];
      worst = std::max(worst, std::abs(geweke_z(trace)));
    }
    rec.geweke_max_abs_z = worst;
  }
  rec.ok = true;
  return rec;
}

}  // namespace

CoverageReport aggregate_records(const std::vector<Variant>& variants,
                                 std::vector<ReplicateRecord> records) {
  CoverageReport report;
  report.variants = variants;
  report.n_replicates = static_cast<int>(records.size());

  long zc = 0, zt = 0, gdc = 0, gdt = 0, goc = 0, got = 0, tc = 0, tt = 0,
       rc = 0, rt = 0;
  int mstcar_idx = -1, separable_idx = -1;
  for (std::size_t v = 0; v < variants.size(); ++v) {
    if (variants[v] == Variant::Mstcar) mstcar_idx = static_cast<int>(v);
    if (variants[v] == Variant::Separable) separable_idx = static_cast<int>(v);
  }
  double rel_sum = 0.0;
  for (const auto& rec : records) {
    if (!rec.ok) {
      ++report.n_failed;
      continue;
    }
    zc += rec.z_covered;
    zt += rec.z_total;
    gdc += rec.g_diag_covered;
    gdt += rec.g_diag_total;
    goc += rec.g_offdiag_covered;
    got += rec.g_offdiag_total;
    tc += rec.tau2_covered;
    tt += rec.tau2_total;
    rc += rec.rho_covered;
    rt += rec.rho_total;
    if (mstcar_idx >= 0 && separable_idx >= 0) {
      const double dm = rec.dic[static_cast<std::size_t>(mstcar_idx)];
      const double ds = rec.dic[static_cast<std::size_t>(separable_idx)];
      ++report.dic_comparisons;
      if (dm < ds) ++report.mstcar_dic_wins;
      rel_sum += (ds - dm) / std::abs(ds);
    }
  }
  const auto pct = [](long covered, long total) {
    return total > 0 ? 100.0 * static_cast<double>(covered) /
                           static_cast<double>(total)
                     : 0.0;
  };
  report.z_pct = pct(zc, zt);
  report.g_diag_pct = pct(gdc, gdt);
  report.g_offdiag_pct = pct(goc, got);
  report.tau2_pct = pct(tc, tt);
  report.rho_pct = pct(rc, rt);
  if (report.dic_comparisons > 0)
    report.mean_relative_dic_improvement =
        rel_sum / report.dic_comparisons;
  report.records = std::move(records);
  return report;
}

CoverageReport run_study(const SimDesign& design, const AdjacencyGraph& graph,
                         int n_threads) {
  SimDesign d = design;
  d.apply_defaults();
  d.validate(graph);
  const SpectralBasis basis = spectral_basis(graph);
  const CovarianceSpec truth = study_truth(d);

  std::vector<ReplicateRecord> records(
      static_cast<std::size_t>(d.n_replicates));
  std::atomic<int> next{0};
  const auto worker = [&]() {
    for (;;) {
      const int ell = next.fetch_add(1);
      if (ell >= d.n_replicates) return;
      auto& rec = records[static_cast<std::size_t>(ell)];
      try {
        rec = run_replicate(ell, d, graph, basis, truth);
      } catch (const std::exception& e) {
        rec.replicate = ell;
        rec.ok = false;
        rec.error = e.what();
      }
    }
  };
  const int workers = std::max(1, n_threads);
  if (workers == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(workers));
    for (int w = 0; w < workers; ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
  }
  return aggregate_records(d.variants, std::move(records));
}

}  // namespace mstcar
