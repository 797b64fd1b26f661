#include <fcntl.h>
#include <unistd.h>

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "mstcar/diagnostics.hpp"
#include "mstcar/io.hpp"
#include "mstcar/model.hpp"
#include "mstcar/sampler.hpp"
#include "mstcar/simstudy.hpp"

namespace fs = std::filesystem;
using namespace mstcar;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitGeneration = 3;
constexpr int kExitSampler = 4;

// One command instance per output directory.
class OutputLock {
 public:
  explicit OutputLock(const fs::path& dir) : path_(dir / ".mstcar.lock") {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) throw ConfigError("cannot create output directory " + dir.string());
    fd_ = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
    if (fd_ < 0)
      throw ConfigError("output directory is locked (remove " +
                        path_.string() + " if no other run is active)");
    const std::string pid = std::to_string(::getpid()) + "\n";
    [[maybe_unused]] const auto n = ::write(fd_, pid.data(), pid.size());
  }
  ~OutputLock() {
    if (fd_ >= 0) {
      ::close(fd_);
      ::unlink(path_.c_str());
    }
  }
  OutputLock(const OutputLock&) = delete;
  OutputLock& operator=(const OutputLock&) = delete;

 private:
  fs::path path_;
  int fd_ = -1;
};

std::string replicate_name(const char* prefix, int ell) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s_%03d", prefix, ell);
  return buf;
}

struct SamplerFlags {
  int iterations = 6000;
  int burn_in = 1000;
  int thin = 10;
  double rho_proposal_sd = 0.5;
  std::uint64_t seed = 1;
  bool no_center_z = false;
  bool no_adapt_rho = false;
  int checkpoint_every = 0;
  std::string resume;
};

struct PriorFlags {
  double rho_beta_a = 9.0;
  double rho_beta_b = 1.0;
  double g_df = 0.0;          // 0: default n_groups + 2
  double g_scale_diag = 0.0;  // 0: default n_groups
};

void add_sampler_flags(CLI::App* cmd, SamplerFlags& f) {
  cmd->add_option("--iterations", f.iterations, "Total MCMC iterations")
      ->envname("MSTCAR_ITERATIONS");
  cmd->add_option("--burn-in", f.burn_in, "Discarded initial iterations")
      ->envname("MSTCAR_BURN_IN");
  cmd->add_option("--thin", f.thin, "Keep every thin-th post-burn-in draw")
      ->envname("MSTCAR_THIN");
  cmd->add_option("--rho-proposal-sd", f.rho_proposal_sd,
                  "Initial logit-scale proposal sd for rho")
      ->envname("MSTCAR_RHO_PROPOSAL_SD");
  cmd->add_option("--seed", f.seed, "Master RNG seed")->envname("MSTCAR_SEED");
  cmd->add_flag("--no-center-z", f.no_center_z,
                "Disable per-(group,time) recentering of the random effects");
  cmd->add_flag("--no-adapt-rho", f.no_adapt_rho,
                "Disable burn-in tuning of the rho proposal");
  cmd->add_option("--checkpoint-every", f.checkpoint_every,
                  "Write a checkpoint every N iterations (0 = off)")
      ->envname("MSTCAR_CHECKPOINT_EVERY");
  cmd->add_option("--resume", f.resume, "Resume from a checkpoint file")
      ->envname("MSTCAR_RESUME");
}

void add_prior_flags(CLI::App* cmd, PriorFlags& f) {
  cmd->add_option("--rho-beta-a", f.rho_beta_a, "Beta prior a for rho")
      ->envname("MSTCAR_RHO_BETA_A");
  cmd->add_option("--rho-beta-b", f.rho_beta_b, "Beta prior b for rho")
      ->envname("MSTCAR_RHO_BETA_B");
  cmd->add_option(
         "--g-df", f.g_df,
         "Inverse Wishart prior degrees of freedom (default n_groups + 2)")
      ->envname("MSTCAR_G_DF");
  cmd->add_option("--g-scale-diag", f.g_scale_diag,
                  "Inverse Wishart prior scale = value * identity "
                  "(default n_groups)")
      ->envname("MSTCAR_G_SCALE_DIAG");
}

PriorConfig make_prior(const PriorFlags& f, int n_groups) {
  PriorConfig prior = PriorConfig::defaults(n_groups);
  prior.rho_beta_a = f.rho_beta_a;
  prior.rho_beta_b = f.rho_beta_b;
  if (f.g_df > 0.0) prior.g_df = f.g_df;
  if (f.g_scale_diag > 0.0)
    prior.g_scale =
        f.g_scale_diag * Eigen::MatrixXd::Identity(n_groups, n_groups);
  prior.validate(n_groups);
  return prior;
}

std::vector<Variant> parse_variants(const std::string& name) {
  if (name == "all")
    return {Variant::Mstcar, Variant::Separable, Variant::StcarIndependent};
  return {variant_from_name(name)};
}

// ---------------------------------------------------------------------------

int cmd_simulate(const std::string& design_path, const std::string& out_dir,
                 std::optional<std::uint64_t> seed_override, int threads) {
  SimDesign design = io::read_design_json(design_path);
  if (seed_override) design.seed = *seed_override;

  std::vector<std::string> site_ids;
  const std::vector<std::string>* ids = nullptr;
  if (!design.site_map_path.empty()) {
    site_ids = io::read_site_map_csv(design.site_map_path);
    ids = &site_ids;
  }
  const AdjacencyGraph graph = io::read_adjacency_csv(
      design.adjacency_path, ids ? static_cast<int>(site_ids.size()) : 0);
  if (design.population_mode == SimDesign::PopulationMode::Table)
    design.population_table =
        io::read_population_csv(design.population_table_path, graph.n_sites(),
                                design.n_groups, design.n_time, ids);
  design.apply_defaults();
  design.validate(graph);

  const OutputLock lock{fs::path(out_dir)};
  try {
    const SpectralBasis basis = spectral_basis(graph);
    const CovarianceSpec truth = study_truth(design);
    io::write_truth_json((fs::path(out_dir) / "truth.json").string(), truth);

    std::atomic<int> next{0};
    std::atomic<bool> failed{false};
    std::string first_error;
    std::mutex error_mutex;
    const auto worker = [&]() {
      for (;;) {
        const int ell = next.fetch_add(1);
        if (ell >= design.n_replicates || failed.load()) return;
        try {
          const ReplicateData rep = study_replicate(design, truth, basis, ell);
          const fs::path base(out_dir);
          io::write_field_csv(
              (base / (replicate_name("field", ell) + ".csv")).string(),
              rep.field, design.n_groups);
          io::write_data_csv(
              (base / (replicate_name("replicate", ell) + ".csv")).string(),
              rep.data, ids);
        } catch (const std::exception& e) {
          std::lock_guard<std::mutex> guard(error_mutex);
          if (!failed.exchange(true)) first_error = e.what();
        }
      }
    };
    std::vector<std::thread> pool;
    for (int w = 0; w < std::max(1, threads); ++w) pool.emplace_back(worker);
    for (auto& th : pool) th.join();
    if (failed.load()) {
      std::fprintf(stderr, "error: %s\n", first_error.c_str());
      return kExitGeneration;
    }
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitGeneration;
  }
  std::printf("simulate: wrote %d replicate(s) to %s\n", design.n_replicates,
              out_dir.c_str());
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct FitInputs {
  RateDataset data;
  AdjacencyGraph graph;
  std::vector<std::string> site_ids;
  bool has_ids = false;
};

FitInputs load_fit_inputs(const std::string& data_path,
                          const std::string& adjacency_path,
                          const std::string& site_map_path) {
  std::vector<std::string> site_ids;
  const std::vector<std::string>* ids = nullptr;
  if (!site_map_path.empty()) {
    site_ids = io::read_site_map_csv(site_map_path);
    ids = &site_ids;
  }
  RateDataset data = io::read_data_csv(data_path, ids);
  AdjacencyGraph graph = io::read_adjacency_csv(adjacency_path, data.n_sites);
  if (graph.n_sites() != data.n_sites)
    throw ConfigError("adjacency and data disagree on the number of sites");
  return {std::move(data), std::move(graph), std::move(site_ids),
          ids != nullptr};
}

void write_fit_outputs(const fs::path& out_dir, const std::string& vname,
                       const PosteriorSamples& samples,
                       const RateDataset& data) {
  io::write_samples((out_dir / ("samples_" + vname + ".bin")).string(),
                    samples);
  io::write_summary_csv((out_dir / ("summary_" + vname + ".csv")).string(),
                        summarize_samples(samples));
  io::write_summary_csv((out_dir / ("sigma_eta_" + vname + ".csv")).string(),
                        sigma_eta_summary(samples));
  std::vector<SummaryRow> trend_rows;
  for (int k = 0; k < data.n_groups; ++k) {
    const auto trend = nationwide_trend(samples, data, k);
    for (int t = 0; t < data.n_time; ++t)
      trend_rows.push_back(
          {"trend", -1, k, t, trend[static_cast<std::size_t>(t)]});
  }
  io::write_summary_csv((out_dir / ("trend_" + vname + ".csv")).string(),
                        trend_rows);
}

int cmd_fit(const std::string& data_path, const std::string& adjacency_path,
            const std::string& site_map_path, const std::string& out_dir,
            const std::string& variant_arg, const SamplerFlags& sflags,
            const PriorFlags& pflags, int threads) {
  const std::vector<Variant> variants = parse_variants(variant_arg);
  FitInputs inputs = load_fit_inputs(data_path, adjacency_path, site_map_path);
  const PriorConfig prior = make_prior(pflags, inputs.data.n_groups);

  SamplerConfig base;
  base.n_iterations = sflags.iterations;
  base.burn_in = sflags.burn_in;
  base.thin = sflags.thin;
  base.rho_proposal_sd = sflags.rho_proposal_sd;
  base.center_z = !sflags.no_center_z;
  base.adapt_rho = !sflags.no_adapt_rho;
  base.validate();
  if (!sflags.resume.empty() && variants.size() != 1)
    throw ConfigError("--resume requires a single variant");

  const OutputLock lock{fs::path(out_dir)};
  std::vector<std::optional<PosteriorSamples>> results(variants.size());
  std::vector<std::string> errors(variants.size());

  const auto fit_one = [&](std::size_t v) {
    SamplerConfig config = base;
    config.variant = variants[v];
    // Per-variant chain seed, stable across single- and multi-variant runs.
    config.seed = derive_seed(sflags.seed, 0x666974ULL,
                              static_cast<std::uint64_t>(variants[v]));
    const std::string vname = variant_name(variants[v]);
    if (sflags.checkpoint_every > 0) {
      config.checkpoint_every = sflags.checkpoint_every;
      config.checkpoint_path =
          (fs::path(out_dir) / ("checkpoint_" + vname + ".json")).string();
    }
    config.resume_path = sflags.resume;
    try {
      results[v] = run_chain(inputs.data, inputs.graph, prior, config);
    } catch (const std::exception& e) {
      errors[v] = e.what();
    }
  };

  if (threads > 1 && variants.size() > 1) {
    std::vector<std::thread> pool;
    for (std::size_t v = 0; v < variants.size(); ++v)
      pool.emplace_back(fit_one, v);
    for (auto& th : pool) th.join();
  } else {
    for (std::size_t v = 0; v < variants.size(); ++v) fit_one(v);
  }

  for (std::size_t v = 0; v < variants.size(); ++v)
    if (!results[v]) {
      std::fprintf(stderr, "error: %s fit failed: %s\n",
                   variant_name(variants[v]).c_str(), errors[v].c_str());
      return kExitSampler;
    }

  try {
    std::vector<std::pair<std::string, DicResult>> dic_entries;
    for (std::size_t v = 0; v < variants.size(); ++v) {
      const std::string vname = variant_name(variants[v]);
      write_fit_outputs(fs::path(out_dir), vname, *results[v], inputs.data);
      dic_entries.emplace_back(vname, dic(*results[v], inputs.data));
    }
    io::write_dic_json((fs::path(out_dir) / "dic.json").string(), dic_entries);
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitGeneration;
  }
  std::printf("fit: wrote %zu variant(s) to %s\n", variants.size(),
              out_dir.c_str());
  return kExitOk;
}

// ---------------------------------------------------------------------------

int cmd_coverage(const std::string& study_dir, const std::string& fits_dir,
                 const std::string& out_dir) {
  const fs::path study(study_dir);
  if (!fs::exists(study / "truth.json"))
    throw ConfigError("no truth.json under " + study_dir);
  const CovarianceSpec truth =
      io::read_truth_json((study / "truth.json").string());
  const int ng = truth.n_groups();

  std::vector<int> replicates;
  for (int ell = 0;; ++ell) {
    if (!fs::exists(study / (replicate_name("replicate", ell) + ".csv")))
      break;
    replicates.push_back(ell);
  }
  if (replicates.empty())
    throw ConfigError("no replicate files under " + study_dir);

  const OutputLock lock{fs::path(out_dir)};
  std::vector<ReplicateRecord> records;
  bool saw_separable = false;

  for (int ell : replicates) {
    const fs::path fit_dir = fs::path(fits_dir) / replicate_name("rep", ell);
    const fs::path summary_path = fit_dir / "summary_mstcar.csv";
    const fs::path dic_path = fit_dir / "dic.json";
    if (!fs::exists(summary_path) || !fs::exists(dic_path))
      throw ConfigError("missing fit outputs for " +
                        replicate_name("replicate", ell) + " under " +
                        fit_dir.string());

    const Eigen::MatrixXd field = io::read_field_csv(
        (study / (replicate_name("field", ell) + ".csv")).string(), ng);
    const auto rows = io::read_summary_csv(summary_path.string());

    ReplicateRecord rec;
    rec.replicate = ell;
    rec.ok = true;
    for (const auto& row : rows) {
      if (row.family == "z") {
        const int c = row.time * ng + row.group;
        ++rec.z_total;
        if (row.interval.covers(field(row.site, c))) ++rec.z_covered;
      } else if (row.family == "g_diag") {
        ++rec.g_diag_total;
        if (row.interval.covers(truth.g[static_cast<std::size_t>(row.time)](
                row.group, row.group)))
          ++rec.g_diag_covered;
      } else if (row.family == "g_offdiag") {
        // `site` carries the second group index for this family.
        ++rec.g_offdiag_total;
        if (row.interval.covers(truth.g[static_cast<std::size_t>(row.time)](
                row.group, row.site)))
          ++rec.g_offdiag_covered;
      } else if (row.family == "tau2") {
        ++rec.tau2_total;
        if (row.interval.covers(truth.tau2[row.group])) ++rec.tau2_covered;
      } else if (row.family == "rho") {
        ++rec.rho_total;
        if (row.interval.covers(truth.rho[row.group])) ++rec.rho_covered;
      }
    }
    rec.dic.assign(2, std::numeric_limits<double>::quiet_NaN());
    for (const auto& [name, result] : io::read_dic_json(dic_path.string())) {
      if (name == "mstcar") rec.dic[0] = result.dic;
      if (name == "separable") {
        rec.dic[1] = result.dic;
        saw_separable = true;
      }
    }
    records.push_back(std::move(rec));
  }
  std::vector<Variant> variants{Variant::Mstcar};
  if (saw_separable) variants.push_back(Variant::Separable);
  for (auto& rec : records) rec.dic.resize(variants.size());

  const CoverageReport report =
      aggregate_records(variants, std::move(records));
  io::write_coverage_report((fs::path(out_dir) / "coverage.json").string(),
                            (fs::path(out_dir) / "records.csv").string(),
                            report);
  std::printf(
      "coverage: %d replicate(s); z %.1f%%, g diag %.1f%%, g offdiag %.1f%%, "
      "tau2 %.1f%%, rho %.1f%%\n",
      report.n_replicates, report.z_pct, report.g_diag_pct,
      report.g_offdiag_pct, report.tau2_pct, report.rho_pct);
  return kExitOk;
}

// ---------------------------------------------------------------------------

int cmd_summarize(const std::string& samples_path,
                  const std::string& data_path,
                  const std::string& site_map_path,
                  const std::string& out_dir) {
  std::vector<std::string> site_ids;
  const std::vector<std::string>* ids = nullptr;
  if (!site_map_path.empty()) {
    site_ids = io::read_site_map_csv(site_map_path);
    ids = &site_ids;
  }
  const RateDataset data = io::read_data_csv(data_path, ids);
  const PosteriorSamples samples = io::read_samples(samples_path);
  if (samples.n_sites != data.n_sites || samples.n_groups != data.n_groups ||
      samples.n_time != data.n_time)
    throw ConfigError("samples store does not match the dataset dimensions");

  const OutputLock lock{fs::path(out_dir)};
  const std::string vname = variant_name(samples.variant);
  write_fit_outputs(fs::path(out_dir), vname, samples, data);
  io::write_dic_json((fs::path(out_dir) / "dic.json").string(),
                     {{vname, dic(samples, data)}});
  std::printf("summarize: wrote %s summaries to %s\n", vname.c_str(),
              out_dir.c_str());
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Bayesian multivariate space-time CAR modeling for areal rate data"};
  app.require_subcommand(1);

  std::string design_path, sim_out;
  std::uint64_t sim_seed = 0;
  int sim_threads = 1;
  auto* sim = app.add_subcommand(
      "simulate", "Generate replicate datasets from a design file");
  sim->add_option("--design", design_path, "Design JSON file")
      ->required()
      ->envname("MSTCAR_DESIGN");
  sim->add_option("--out", sim_out, "Output directory")
      ->required()
      ->envname("MSTCAR_OUT");
  auto* sim_seed_opt = sim->add_option("--seed", sim_seed,
                                       "Override the design seed")
                           ->envname("MSTCAR_SEED");
  sim->add_option("--threads", sim_threads, "Worker threads")
      ->envname("MSTCAR_THREADS");

  std::string fit_data, fit_adj, fit_map, fit_out, fit_variant = "mstcar";
  SamplerFlags sflags;
  PriorFlags pflags;
  int fit_threads = 1;
  auto* fit = app.add_subcommand("fit", "Run the MCMC sampler on a dataset");
  fit->add_option("--data", fit_data, "Data CSV")
      ->required()
      ->envname("MSTCAR_DATA");
  fit->add_option("--adjacency", fit_adj, "Adjacency CSV")
      ->required()
      ->envname("MSTCAR_ADJACENCY");
  fit->add_option("--site-map", fit_map, "Site identifier map CSV")
      ->envname("MSTCAR_SITE_MAP");
  fit->add_option("--out", fit_out, "Output directory")
      ->required()
      ->envname("MSTCAR_OUT");
  fit->add_option("--variant", fit_variant, "mstcar | separable | stcar | all")
      ->envname("MSTCAR_VARIANT");
  fit->add_option("--threads", fit_threads,
                  "Fit variants concurrently when > 1")
      ->envname("MSTCAR_THREADS");
  add_sampler_flags(fit, sflags);
  add_prior_flags(fit, pflags);

  std::string cov_study, cov_fits, cov_out;
  auto* cov = app.add_subcommand(
      "coverage", "Score fitted replicates against the simulation truth");
  cov->add_option("--study", cov_study, "simulate output directory")
      ->required()
      ->envname("MSTCAR_STUDY");
  cov->add_option("--fits", cov_fits,
                  "directory containing rep_### fit outputs")
      ->required()
      ->envname("MSTCAR_FITS");
  cov->add_option("--out", cov_out, "Output directory")
      ->required()
      ->envname("MSTCAR_OUT");

  std::string sum_samples, sum_data, sum_map, sum_out;
  auto* sum = app.add_subcommand("summarize",
                                 "Recompute summaries from a samples store");
  sum->add_option("--samples", sum_samples, "Samples store (.bin)")
      ->required()
      ->envname("MSTCAR_SAMPLES");
  sum->add_option("--data", sum_data, "Data CSV")
      ->required()
      ->envname("MSTCAR_DATA");
  sum->add_option("--site-map", sum_map, "Site identifier map CSV")
      ->envname("MSTCAR_SITE_MAP");
  sum->add_option("--out", sum_out, "Output directory")
      ->required()
      ->envname("MSTCAR_OUT");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (sim->parsed())
      return cmd_simulate(design_path, sim_out,
                          sim_seed_opt->count() > 0
                              ? std::optional<std::uint64_t>(sim_seed)
                              : std::nullopt,
                          sim_threads);
    if (fit->parsed())
      return cmd_fit(fit_data, fit_adj, fit_map, fit_out, fit_variant, sflags,
                     pflags, fit_threads);
    if (cov->parsed()) return cmd_coverage(cov_study, cov_fits, cov_out);
    if (sum->parsed())
      return cmd_summarize(sum_samples, sum_data, sum_map, sum_out);
  } catch (const ConfigError& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return kExitConfig;
  }
  return kExitConfig;
}
