#include "mstcar/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <Eigen/Cholesky>
#include <json.hpp>

namespace mstcar {

namespace {

constexpr double kLogTwoPi = 1.8378770664093454836;
constexpr double kRhoAcceptTarget = 0.44;
constexpr int kRhoAdaptBatch = 50;

struct InfoForm {
  Eigen::MatrixXd precision;
  Eigen::VectorXd info;
};

Eigen::VectorXd draw_from_info(const InfoForm& form, Rng& rng,
                               const char* what) {
  Eigen::LLT<Eigen::MatrixXd> llt(form.precision);
  if (llt.info() != Eigen::Success) throw FactorizationFailure(what);
  const Eigen::VectorXd mean = llt.solve(form.info);
  const Eigen::VectorXd eps = rng.normal_vector(form.info.size());
  // mean + U^{-1} eps with U'U = precision.
  return mean + llt.matrixU().solve(eps);
}

InfoForm beta_info(const RateDataset& data, const ModelState& state,
                   int group) {
  InfoForm form;
  form.precision = Eigen::MatrixXd::Zero(data.p, data.p);
  form.info = Eigen::VectorXd::Zero(data.p);
  const double tau2 = state.cov.tau2[group];
  for (int t = 0; t < data.n_time; ++t) {
    const int c = data.col(group, t);
    if (data.time_intercept_design) {
      double wsum = 0.0, bsum = 0.0;
      for (int i = 0; i < data.n_sites; ++i) {
        const double w = data.pop(i, c) / tau2;
        wsum += w;
        bsum += w * (state.y(i, c) - state.z(i, c));
      }
      form.precision(t, t) += wsum;
      form.info[t] += bsum;
    } else {
      for (int i = 0; i < data.n_sites; ++i) {
        const double w = data.pop(i, c) / tau2;
        const Eigen::VectorXd x = data.x_row(i, group, t);
        form.precision += w * x * x.transpose();
        form.info += w * (state.y(i, c) - state.z(i, c)) * x;
      }
    }
  }
  return form;
}

InfoForm z_site_info(int site, const RateDataset& data,
                     const ModelState& state, const AdjacencyGraph& graph,
                     const Eigen::MatrixXd& q_eta) {
  const auto& nbrs = graph.neighbors(site);
  const double m = static_cast<double>(nbrs.size());
  Eigen::VectorXd neighbor_mean = Eigen::VectorXd::Zero(data.dim());
  for (int j : nbrs) neighbor_mean += state.z.row(j);
  neighbor_mean /= m;

  InfoForm form;
  form.precision = m * q_eta;
  form.info = m * (q_eta * neighbor_mean);
  for (int t = 0; t < data.n_time; ++t)
    for (int k = 0; k < data.n_groups; ++k) {
      const int c = data.col(k, t);
      const double w = data.pop(site, c) / state.cov.tau2[k];
      form.precision(c, c) += w;
      form.info[c] +=
          w * (state.y(site, c) - data.fixed_effect(site, k, t, state.beta));
    }
  return form;
}

double inv_gamma_draw(const InvGammaParams& p, Rng& rng) {
  return p.rate / rng.gamma(p.shape);
}

double logit(double x) { return std::log(x / (1.0 - x)); }
double inv_logit(double s) { return 1.0 / (1.0 + std::exp(-s)); }

// Shared MH body for the per-group and shared-rho moves. `target` must
// already include the Beta prior; the logit Jacobian is added here.
template <typename TargetFn, typename ApplyFn>
std::pair<double, bool> rho_mh_step(double current, double proposal_sd,
                                    TargetFn target, ApplyFn apply, Rng& rng) {
  if (!(current > 0.0 && current < 1.0))
    throw InvalidRho("MH update needs current rho in (0,1)");
  const double proposal = inv_logit(logit(current) + proposal_sd * rng.normal());
  if (!(proposal > 0.0 && proposal < 1.0)) return {current, false};
  const double log_ratio =
      (target(proposal) + std::log(proposal) + std::log1p(-proposal)) -
      (target(current) + std::log(current) + std::log1p(-current));
  if (std::log(rng.uniform()) < log_ratio) {
    apply(proposal);
    return {proposal, true};
  }
  return {current, false};
}

}  // namespace

std::string variant_name(Variant v) {
  switch (v) {
    case Variant::Mstcar: return "mstcar";
    case Variant::Separable: return "separable";
    case Variant::StcarIndependent: return "stcar";
  }
  throw ConfigError("unknown variant");
}

Variant variant_from_name(const std::string& name) {
  if (name == "mstcar") return Variant::Mstcar;
  if (name == "separable") return Variant::Separable;
  if (name == "stcar" || name == "stcar_independent")
    return Variant::StcarIndependent;
  throw ConfigError("unknown variant '" + name + "'");
}

void SamplerConfig::validate() const {
  if (n_iterations < 1) throw ConfigError("n_iterations must be positive");
  if (burn_in < 0 || burn_in >= n_iterations)
    throw ConfigError("burn_in must satisfy 0 <= burn_in < n_iterations");
  if (thin < 1) throw ConfigError("thin must be >= 1");
  if (!(rho_proposal_sd > 0.0))
    throw ConfigError("rho_proposal_sd must be positive");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be >= 0");
  if (checkpoint_every > 0 && checkpoint_path.empty())
    throw ConfigError("checkpointing enabled without a checkpoint path");
}

double GaussianFullConditional::log_density(const Eigen::VectorXd& x) const {
  Eigen::LLT<Eigen::MatrixXd> llt(precision);
  if (llt.info() != Eigen::Success)
    throw FactorizationFailure("Gaussian log density");
  const double logdet =
      2.0 * Eigen::MatrixXd(llt.matrixL()).diagonal().array().log().sum();
  const Eigen::VectorXd d = x - mean;
  return 0.5 * (logdet - x.size() * kLogTwoPi) -
         0.5 * d.dot(precision * d);
}

double InvGammaParams::log_density(double x) const {
  if (!(x > 0.0)) throw Error("inverse gamma density needs x > 0");
  return shape * std::log(rate) - std::lgamma(shape) -
         (shape + 1.0) * std::log(x) - rate / x;
}

GaussianFullConditional beta_full_conditional(const RateDataset& data,
                                              const ModelState& state,
                                              int group) {
  const InfoForm form = beta_info(data, state, group);
  Eigen::LLT<Eigen::MatrixXd> llt(form.precision);
  if (llt.info() != Eigen::Success)
    throw SingularDesign("group " + std::to_string(group));
  return {llt.solve(form.info), form.precision};
}

GaussianFullConditional z_site_conditional_from_parts(
    int m_i, const Eigen::VectorXd& neighbor_mean,
    const Eigen::MatrixXd& q_eta, const Eigen::VectorXd& data_precision,
    const Eigen::VectorXd& data_mean) {
  InfoForm form;
  form.precision = m_i * q_eta;
  form.precision.diagonal() += data_precision;
  form.info = m_i * (q_eta * neighbor_mean) +
              data_precision.cwiseProduct(data_mean);
  Eigen::LLT<Eigen::MatrixXd> llt(form.precision);
  if (llt.info() != Eigen::Success)
    throw FactorizationFailure("z site conditional");
  return {llt.solve(form.info), form.precision};
}

GaussianFullConditional z_site_full_conditional(int site,
                                                const RateDataset& data,
                                                const ModelState& state,
                                                const AdjacencyGraph& graph,
                                                const Eigen::MatrixXd& q_eta) {
  const InfoForm form = z_site_info(site, data, state, graph, q_eta);
  Eigen::LLT<Eigen::MatrixXd> llt(form.precision);
  if (llt.info() != Eigen::Success)
    throw FactorizationFailure("z site conditional");
  return {llt.solve(form.info), form.precision};
}

InvGammaParams tau2_full_conditional(const RateDataset& data,
                                     const ModelState& state, int group) {
  int m = 0;
  double ss = 0.0;
  for (int t = 0; t < data.n_time; ++t) {
    const int c = data.col(group, t);
    for (int i = 0; i < data.n_sites; ++i) {
      if (!data.observed(i, c)) continue;
      const double resid = data.y(i, c) -
                           data.fixed_effect(i, group, t, state.beta) -
                           state.z(i, c);
      ss += data.pop(i, c) * resid * resid;
      ++m;
    }
  }
  if (m < 2)
    throw InsufficientData("tau2 update needs >= 2 observed cells in group " +
                           std::to_string(group));
  if (ss == 0.0)
    throw DegenerateResiduals("all residuals zero in group " +
                              std::to_string(group));
  return {0.5 * (m - 1), 0.5 * ss};
}

std::vector<Eigen::MatrixXd> edge_increment_scatter(
    const Eigen::MatrixXd& z, const AdjacencyGraph& graph,
    const Eigen::VectorXd& rho_list, int n_groups) {
  const int nt = static_cast<int>(z.cols()) / n_groups;
  std::vector<Eigen::MatrixXd> scatter(
      static_cast<std::size_t>(nt),
      Eigen::MatrixXd::Zero(n_groups, n_groups));
  for (auto [a, b] : graph.edges()) {
    const Eigen::VectorXd d = whiten_increment(z.row(a) - z.row(b), rho_list);
    for (int t = 0; t < nt; ++t) {
      const Eigen::VectorXd dt = d.segment(t * n_groups, n_groups);
      scatter[static_cast<std::size_t>(t)] += dt * dt.transpose();
    }
  }
  return scatter;
}

InvWishartParams g_full_conditional(int t,
                                    const std::vector<Eigen::MatrixXd>& scatter,
                                    const AdjacencyGraph& graph,
                                    const PriorConfig& prior) {
  return {prior.g_scale + scatter[static_cast<std::size_t>(t)],
          prior.g_df + (graph.n_sites() - 1)};
}

InvWishartParams g_full_conditional_pooled(
    const std::vector<Eigen::MatrixXd>& scatter, const AdjacencyGraph& graph,
    const PriorConfig& prior) {
  Eigen::MatrixXd pooled = prior.g_scale;
  for (const auto& s : scatter) pooled += s;
  const double nt = static_cast<double>(scatter.size());
  return {pooled, prior.g_df + nt * (graph.n_sites() - 1)};
}

InvGammaParams stcar_sigma2_full_conditional(
    int k, const std::vector<Eigen::MatrixXd>& scatter,
    const AdjacencyGraph& graph, const PriorConfig& prior) {
  double s = 0.0;
  for (const auto& st : scatter) s += st(k, k);
  const double nt = static_cast<double>(scatter.size());
  return {0.5 * prior.g_df + 0.5 * nt * (graph.n_sites() - 1),
          0.5 * prior.g_scale(k, k) + 0.5 * s};
}

double rho_log_target(int k, double rho_value, const Eigen::MatrixXd& z,
                      const AdjacencyGraph& graph, const CovarianceSpec& spec,
                      const PriorConfig& prior) {
  CovarianceSpec probe = spec;
  probe.rho[k] = rho_value;
  return mstcar_log_prior(z, graph, probe) +
         log_beta_density(rho_value, prior.rho_beta_a, prior.rho_beta_b);
}

double rho_log_target_shared(double rho_value, const Eigen::MatrixXd& z,
                             const AdjacencyGraph& graph,
                             const CovarianceSpec& spec,
                             const PriorConfig& prior) {
  CovarianceSpec probe = spec;
  probe.rho.setConstant(rho_value);
  return mstcar_log_prior(z, graph, probe) +
         log_beta_density(rho_value, prior.rho_beta_a, prior.rho_beta_b);
}

void update_beta(const RateDataset& data, ModelState& state, Rng& rng) {
  for (int k = 0; k < data.n_groups; ++k) {
    const InfoForm form = beta_info(data, state, k);
    Eigen::LLT<Eigen::MatrixXd> llt(form.precision);
    if (llt.info() != Eigen::Success)
      throw SingularDesign("group " + std::to_string(k));
    const Eigen::VectorXd mean = llt.solve(form.info);
    state.beta.row(k) =
        (mean + llt.matrixU().solve(rng.normal_vector(data.p))).transpose();
  }
}

void update_z_site(int site, const RateDataset& data, ModelState& state,
                   const AdjacencyGraph& graph, const Eigen::MatrixXd& q_eta,
                   Rng& rng) {
  const InfoForm form = z_site_info(site, data, state, graph, q_eta);
  state.z.row(site) = draw_from_info(form, rng, "z site update").transpose();
}

void update_tau2(const RateDataset& data, ModelState& state, Rng& rng) {
  for (int k = 0; k < data.n_groups; ++k)
    state.cov.tau2[k] = inv_gamma_draw(tau2_full_conditional(data, state, k), rng);
}

void update_g(int t, ModelState& state,
              const std::vector<Eigen::MatrixXd>& scatter,
              const AdjacencyGraph& graph, const PriorConfig& prior,
              Rng& rng) {
  const InvWishartParams p = g_full_conditional(t, scatter, graph, prior);
  state.cov.g[static_cast<std::size_t>(t)] =
      inverse_wishart(rng, p.scale, p.df);
}

std::pair<double, bool> update_rho(int k, ModelState& state,
                                   const AdjacencyGraph& graph,
                                   const PriorConfig& prior,
                                   double proposal_sd, Rng& rng) {
  return rho_mh_step(
      state.cov.rho[k], proposal_sd,
      [&](double r) {
        return rho_log_target(k, r, state.z, graph, state.cov, prior);
      },
      [&](double r) { state.cov.rho[k] = r; }, rng);
}

std::pair<double, bool> update_rho_shared(ModelState& state,
                                          const AdjacencyGraph& graph,
                                          const PriorConfig& prior,
                                          double proposal_sd, Rng& rng) {
  return rho_mh_step(
      state.cov.rho[0], proposal_sd,
      [&](double r) {
        return rho_log_target_shared(r, state.z, graph, state.cov, prior);
      },
      [&](double r) { state.cov.rho.setConstant(r); }, rng);
}

void impute_missing(const RateDataset& data, ModelState& state, Rng& rng) {
  for (int t = 0; t < data.n_time; ++t)
    for (int k = 0; k < data.n_groups; ++k) {
      const int c = data.col(k, t);
      for (int i = 0; i < data.n_sites; ++i) {
        if (data.observed(i, c)) continue;
        const double mean =
            data.fixed_effect(i, k, t, state.beta) + state.z(i, c);
        const double sd = std::sqrt(state.cov.tau2[k] / data.pop(i, c));
        state.y(i, c) = mean + sd * rng.normal();
      }
    }
}

ModelState initial_state(const RateDataset& data, const PriorConfig& prior) {
  data.validate();
  prior.validate(data.n_groups);
  ModelState state;
  state.z = Eigen::MatrixXd::Zero(data.n_sites, data.dim());
  state.beta = Eigen::MatrixXd::Zero(data.n_groups, data.p);

  // Weighted least squares per group on observed cells, ignoring z.
  for (int k = 0; k < data.n_groups; ++k) {
    Eigen::MatrixXd precision = Eigen::MatrixXd::Zero(data.p, data.p);
    Eigen::VectorXd info = Eigen::VectorXd::Zero(data.p);
    for (int t = 0; t < data.n_time; ++t) {
      const int c = data.col(k, t);
      for (int i = 0; i < data.n_sites; ++i) {
        if (!data.observed(i, c)) continue;
        const double w = data.pop(i, c);
        const Eigen::VectorXd x = data.x_row(i, k, t);
        precision += w * x * x.transpose();
        info += w * data.y(i, c) * x;
      }
    }
    // Strata with no observed data keep a zero coefficient.
    precision.diagonal() =
        precision.diagonal().cwiseMax(1e-300);
    Eigen::LLT<Eigen::MatrixXd> llt(precision);
    if (llt.info() != Eigen::Success)
      throw SingularDesign("initialization, group " + std::to_string(k));
    state.beta.row(k) = llt.solve(info).transpose();
  }

  // Moment-matched error variances from the fitted residuals.
  state.cov.tau2 = Eigen::VectorXd::Ones(data.n_groups);
  for (int k = 0; k < data.n_groups; ++k) {
    double ss = 0.0;
    int m = 0;
    for (int t = 0; t < data.n_time; ++t) {
      const int c = data.col(k, t);
      for (int i = 0; i < data.n_sites; ++i) {
        if (!data.observed(i, c)) continue;
        const double resid =
            data.y(i, c) - data.fixed_effect(i, k, t, state.beta);
        ss += data.pop(i, c) * resid * resid;
        ++m;
      }
    }
    if (m < 2)
      throw InsufficientData("group " + std::to_string(k) +
                             " has fewer than 2 observed cells");
    state.cov.tau2[k] = std::max(ss / m, 1e-12);
  }

  state.cov.rho = Eigen::VectorXd::Constant(data.n_groups, 0.8);
  Eigen::MatrixXd g0;
  if (prior.g_df > data.n_groups + 1.0)
    g0 = prior.g_scale / (prior.g_df - data.n_groups - 1.0);
  else
    g0 = Eigen::MatrixXd::Identity(data.n_groups, data.n_groups);
  state.cov.g.assign(static_cast<std::size_t>(data.n_time), g0);

  state.y = data.y;
  for (auto [i, c] : data.unobserved_cells()) {
    const int t = c / data.n_groups;
    const int k = c % data.n_groups;
    state.y(i, c) = data.fixed_effect(i, k, t, state.beta);
  }
  return state;
}

// ---------------------------------------------------------------------------
// Chain driver and checkpointing.

namespace {

using nlohmann::json;

json matrix_to_json(const Eigen::MatrixXd& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  const auto rows = j.size();
  if (rows == 0) return Eigen::MatrixXd(0, 0);
  const auto cols = j.at(0).size();
  Eigen::MatrixXd m(rows, cols);
  for (std::size_t r = 0; r < rows; ++r)
    for (std::size_t c = 0; c < cols; ++c)
      m(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) =
          j.at(r).at(c).get<double>();
  return m;
}

json vector_to_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
  return a;
}

Eigen::VectorXd vector_from_json(const json& j) {
  Eigen::VectorXd v(j.size());
  for (std::size_t i = 0; i < j.size(); ++i)
    v[static_cast<Eigen::Index>(i)] = j.at(i).get<double>();
  return v;
}

json samples_to_json(const PosteriorSamples& s) {
  json j;
  j["n_sites"] = s.n_sites;
  j["n_groups"] = s.n_groups;
  j["n_time"] = s.n_time;
  j["p"] = s.p;
  j["variant"] = variant_name(s.variant);
  j["seed"] = s.seed;
  j["n_iterations"] = s.n_iterations;
  j["burn_in"] = s.burn_in;
  j["thin"] = s.thin;
  json cells = json::array();
  for (auto [i, c] : s.missing_cells) cells.push_back(json::array({i, c}));
  j["missing_cells"] = std::move(cells);
  json beta = json::array(), z = json::array(), g = json::array(),
       rho = json::array(), tau2 = json::array(), yu = json::array();
  for (const auto& m : s.beta) beta.push_back(matrix_to_json(m));
  for (const auto& m : s.z) z.push_back(matrix_to_json(m));
  for (const auto& gs : s.g) {
    json per_t = json::array();
    for (const auto& m : gs) per_t.push_back(matrix_to_json(m));
    g.push_back(std::move(per_t));
  }
  for (const auto& v : s.rho) rho.push_back(vector_to_json(v));
  for (const auto& v : s.tau2) tau2.push_back(vector_to_json(v));
  for (const auto& v : s.y_u) yu.push_back(vector_to_json(v));
  j["beta"] = std::move(beta);
  j["z"] = std::move(z);
  j["g"] = std::move(g);
  j["rho"] = std::move(rho);
  j["tau2"] = std::move(tau2);
  j["y_u"] = std::move(yu);
  j["iteration_index"] = s.iteration_index;
  j["rho_accept_rate"] = vector_to_json(s.rho_accept_rate);
  return j;
}

PosteriorSamples samples_from_json(const json& j) {
  PosteriorSamples s;
  s.n_sites = j.at("n_sites").get<int>();
  s.n_groups = j.at("n_groups").get<int>();
  s.n_time = j.at("n_time").get<int>();
  s.p = j.at("p").get<int>();
  s.variant = variant_from_name(j.at("variant").get<std::string>());
  s.seed = j.at("seed").get<std::uint64_t>();
  s.n_iterations = j.at("n_iterations").get<int>();
  s.burn_in = j.at("burn_in").get<int>();
  s.thin = j.at("thin").get<int>();
  for (const auto& cell : j.at("missing_cells"))
    s.missing_cells.emplace_back(cell.at(0).get<int>(), cell.at(1).get<int>());
  for (const auto& m : j.at("beta")) s.beta.push_back(matrix_from_json(m));
  for (const auto& m : j.at("z")) s.z.push_back(matrix_from_json(m));
  for (const auto& per_t : j.at("g")) {
    std::vector<Eigen::MatrixXd> gs;
    for (const auto& m : per_t) gs.push_back(matrix_from_json(m));
    s.g.push_back(std::move(gs));
  }
  for (const auto& v : j.at("rho")) s.rho.push_back(vector_from_json(v));
  for (const auto& v : j.at("tau2")) s.tau2.push_back(vector_from_json(v));
  for (const auto& v : j.at("y_u")) s.y_u.push_back(vector_from_json(v));
  s.iteration_index = j.at("iteration_index").get<std::vector<int>>();
  s.rho_accept_rate = vector_from_json(j.at("rho_accept_rate"));
  return s;
}

struct ChainScratch {
  Eigen::VectorXd rho_sd;
  Eigen::VectorXi batch_accept, batch_attempt;
  Eigen::VectorXi post_accept, post_attempt;
};

json state_to_json(const ModelState& state) {
  json j;
  j["beta"] = matrix_to_json(state.beta);
  j["z"] = matrix_to_json(state.z);
  json g = json::array();
  for (const auto& m : state.cov.g) g.push_back(matrix_to_json(m));
  j["g"] = std::move(g);
  j["rho"] = vector_to_json(state.cov.rho);
  j["tau2"] = vector_to_json(state.cov.tau2);
  j["y"] = matrix_to_json(state.y);
  return j;
}

ModelState state_from_json(const json& j) {
  ModelState state;
  state.beta = matrix_from_json(j.at("beta"));
  state.z = matrix_from_json(j.at("z"));
  for (const auto& m : j.at("g")) state.cov.g.push_back(matrix_from_json(m));
  state.cov.rho = vector_from_json(j.at("rho"));
  state.cov.tau2 = vector_from_json(j.at("tau2"));
  state.y = matrix_from_json(j.at("y"));
  return state;
}

json config_to_json(const SamplerConfig& c) {
  json j;
  j["n_iterations"] = c.n_iterations;
  j["burn_in"] = c.burn_in;
  j["thin"] = c.thin;
  j["variant"] = variant_name(c.variant);
  j["rho_proposal_sd"] = c.rho_proposal_sd;
  j["seed"] = c.seed;
  j["center_z"] = c.center_z;
  j["adapt_rho"] = c.adapt_rho;
  return j;
}

void check_resume_config(const json& saved, const SamplerConfig& c) {
  if (saved != config_to_json(c))
    throw ConfigError(
        "checkpoint was written under a different sampler configuration");
}

void save_checkpoint(const std::string& path, int completed,
                     const ModelState& state, const Rng& rng,
                     const ChainScratch& scratch,
                     const PosteriorSamples& samples,
                     const SamplerConfig& config) {
  json j;
  j["format"] = "mstcar-checkpoint-1";
  j["completed_iterations"] = completed;
  j["config"] = config_to_json(config);
  j["rng"] = rng.serialize();
  j["state"] = state_to_json(state);
  j["rho_sd"] = vector_to_json(scratch.rho_sd);
  j["batch_accept"] = std::vector<int>(
      scratch.batch_accept.data(),
      scratch.batch_accept.data() + scratch.batch_accept.size());
  j["batch_attempt"] = std::vector<int>(
      scratch.batch_attempt.data(),
      scratch.batch_attempt.data() + scratch.batch_attempt.size());
  j["post_accept"] = std::vector<int>(
      scratch.post_accept.data(),
      scratch.post_accept.data() + scratch.post_accept.size());
  j["post_attempt"] = std::vector<int>(
      scratch.post_attempt.data(),
      scratch.post_attempt.data() + scratch.post_attempt.size());
  j["samples"] = samples_to_json(samples);
  const std::string tmp = path + ".tmp";
  std::ofstream out(tmp, std::ios::binary);
  if (!out) throw IoError("cannot write checkpoint " + path);
  out << j.dump();
  out.close();
  if (std::rename(tmp.c_str(), path.c_str()) != 0)
    throw IoError("cannot move checkpoint into place: " + path);
}

Eigen::VectorXi int_vector_from_json(const json& j) {
  const auto v = j.get<std::vector<int>>();
  return Eigen::Map<const Eigen::VectorXi>(v.data(),
                                           static_cast<Eigen::Index>(v.size()));
}

}  // namespace

PosteriorSamples run_chain(const RateDataset& data, const AdjacencyGraph& graph,
                           const PriorConfig& prior, const SamplerConfig& config,
                           const ModelState* init) {
  config.validate();
  data.validate();
  prior.validate(data.n_groups);
  if (graph.n_sites() != data.n_sites)
    throw DimensionMismatch("graph and dataset disagree on n_sites");
  if (config.center_z && !data.time_intercept_design)
    throw ConfigError("center_z requires the per-time intercept design");

  const int ng = data.n_groups;
  ModelState state;
  Rng rng(config.seed);
  ChainScratch scratch;
  scratch.rho_sd = Eigen::VectorXd::Constant(ng, config.rho_proposal_sd);
  scratch.batch_accept = Eigen::VectorXi::Zero(ng);
  scratch.batch_attempt = Eigen::VectorXi::Zero(ng);
  scratch.post_accept = Eigen::VectorXi::Zero(ng);
  scratch.post_attempt = Eigen::VectorXi::Zero(ng);

  PosteriorSamples samples;
  int start_iteration = 1;

  if (!config.resume_path.empty()) {
    std::ifstream in(config.resume_path, std::ios::binary);
    if (!in) throw IoError("cannot read checkpoint " + config.resume_path);
    json j;
    in >> j;
    if (j.at("format") != "mstcar-checkpoint-1")
      throw IoError("not a checkpoint file: " + config.resume_path);
    check_resume_config(j.at("config"), config);
    state = state_from_json(j.at("state"));
    rng.deserialize(j.at("rng").get<std::string>());
    scratch.rho_sd = vector_from_json(j.at("rho_sd"));
    scratch.batch_accept = int_vector_from_json(j.at("batch_accept"));
    scratch.batch_attempt = int_vector_from_json(j.at("batch_attempt"));
    scratch.post_accept = int_vector_from_json(j.at("post_accept"));
    scratch.post_attempt = int_vector_from_json(j.at("post_attempt"));
    samples = samples_from_json(j.at("samples"));
    start_iteration = j.at("completed_iterations").get<int>() + 1;
  } else {
    state = init ? *init : initial_state(data, prior);
    // Project the initial state onto the variant's constraint set.
    if (config.variant == Variant::Separable) {
      Eigen::MatrixXd g_mean = Eigen::MatrixXd::Zero(ng, ng);
      for (const auto& gt : state.cov.g) g_mean += gt;
      g_mean /= static_cast<double>(state.cov.g.size());
      state.cov.g.assign(state.cov.g.size(), g_mean);
      state.cov.rho.setConstant(state.cov.rho.mean());
    } else if (config.variant == Variant::StcarIndependent) {
      Eigen::MatrixXd g_mean = Eigen::MatrixXd::Zero(ng, ng);
      for (const auto& gt : state.cov.g) g_mean += gt;
      g_mean /= static_cast<double>(state.cov.g.size());
      const Eigen::MatrixXd g_diag =
          g_mean.diagonal().asDiagonal().toDenseMatrix();
      state.cov.g.assign(state.cov.g.size(), g_diag);
    }
    samples.n_sites = data.n_sites;
    samples.n_groups = ng;
    samples.n_time = data.n_time;
    samples.p = data.p;
    samples.variant = config.variant;
    samples.seed = config.seed;
    samples.n_iterations = config.n_iterations;
    samples.burn_in = config.burn_in;
    samples.thin = config.thin;
    samples.missing_cells = data.unobserved_cells();
  }
  state.validate(data);

  for (int it = start_iteration; it <= config.n_iterations; ++it) {
    try {
      update_beta(data, state, rng);

      const Eigen::MatrixXd q_eta = sigma_eta_precision(state.cov);
      for (int i = 0; i < data.n_sites; ++i)
        update_z_site(i, data, state, graph, q_eta, rng);

      if (config.center_z) {
        for (int t = 0; t < data.n_time; ++t)
          for (int k = 0; k < ng; ++k) {
            const int c = data.col(k, t);
            const double shift = state.z.col(c).mean();
            state.z.col(c).array() -= shift;
            state.beta(k, t) += shift;
          }
      }

      update_tau2(data, state, rng);

      const auto scatter =
          edge_increment_scatter(state.z, graph, state.cov.rho, ng);
      switch (config.variant) {
        case Variant::Mstcar:
          for (int t = 0; t < data.n_time; ++t)
            update_g(t, state, scatter, graph, prior, rng);
          break;
        case Variant::Separable: {
          const InvWishartParams p =
              g_full_conditional_pooled(scatter, graph, prior);
          const Eigen::MatrixXd g = inverse_wishart(rng, p.scale, p.df);
          state.cov.g.assign(state.cov.g.size(), g);
          break;
        }
        case Variant::StcarIndependent: {
          Eigen::VectorXd sigma2(ng);
          for (int k = 0; k < ng; ++k)
            sigma2[k] = inv_gamma_draw(
                stcar_sigma2_full_conditional(k, scatter, graph, prior), rng);
          const Eigen::MatrixXd g = sigma2.asDiagonal().toDenseMatrix();
          state.cov.g.assign(state.cov.g.size(), g);
          break;
        }
      }

      if (config.variant == Variant::Separable) {
        const auto [rho, accepted] = update_rho_shared(
            state, graph, prior, scratch.rho_sd[0], rng);
        (void)rho;
        scratch.batch_attempt[0] += 1;
        scratch.batch_accept[0] += accepted ? 1 : 0;
        if (it > config.burn_in) {
          scratch.post_attempt[0] += 1;
          scratch.post_accept[0] += accepted ? 1 : 0;
        }
      } else {
        for (int k = 0; k < ng; ++k) {
          const auto [rho, accepted] =
              update_rho(k, state, graph, prior, scratch.rho_sd[k], rng);
          (void)rho;
          scratch.batch_attempt[k] += 1;
          scratch.batch_accept[k] += accepted ? 1 : 0;
          if (it > config.burn_in) {
            scratch.post_attempt[k] += 1;
            scratch.post_accept[k] += accepted ? 1 : 0;
          }
        }
      }

      impute_missing(data, state, rng);
    } catch (const Error& e) {
      throw Error("iteration " + std::to_string(it) + ": " + e.what());
    }

    if (config.adapt_rho && it <= config.burn_in &&
        it % kRhoAdaptBatch == 0) {
      const double gain =
          1.0 / std::sqrt(static_cast<double>(it) / kRhoAdaptBatch);
      for (int k = 0; k < ng; ++k) {
        if (scratch.batch_attempt[k] == 0) continue;
        const double rate = static_cast<double>(scratch.batch_accept[k]) /
                            scratch.batch_attempt[k];
        scratch.rho_sd[k] = std::clamp(
            scratch.rho_sd[k] * std::exp(gain * (rate - kRhoAcceptTarget)),
            1e-3, 10.0);
      }
      scratch.batch_accept.setZero();
      scratch.batch_attempt.setZero();
    }

    if (it > config.burn_in && (it - config.burn_in) % config.thin == 0) {
      samples.beta.push_back(state.beta);
      samples.z.push_back(state.z);
      samples.g.push_back(state.cov.g);
      samples.rho.push_back(state.cov.rho);
      samples.tau2.push_back(state.cov.tau2);
      Eigen::VectorXd yu(static_cast<Eigen::Index>(samples.missing_cells.size()));
      for (std::size_t m = 0; m < samples.missing_cells.size(); ++m)
        yu[static_cast<Eigen::Index>(m)] =
            state.y(samples.missing_cells[m].first,
                    samples.missing_cells[m].second);
      samples.y_u.push_back(std::move(yu));
      samples.iteration_index.push_back(it);
    }

    if (config.checkpoint_every > 0 && it % config.checkpoint_every == 0)
      save_checkpoint(config.checkpoint_path, it, state, rng, scratch,
                      samples, config);
  }

  samples.rho_accept_rate = Eigen::VectorXd::Zero(ng);
  for (int k = 0; k < ng; ++k)
    if (scratch.post_attempt[k] > 0)
      samples.rho_accept_rate[k] =
          static_cast<double>(scratch.post_accept[k]) /
          scratch.post_attempt[k];
  if (config.variant == Variant::Separable)
    samples.rho_accept_rate.setConstant(samples.rho_accept_rate[0]);
  return samples;
}

}  // namespace mstcar
