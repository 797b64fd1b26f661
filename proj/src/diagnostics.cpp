#include "mstcar/diagnostics.hpp"

#include <algorithm>
#include <cmath>

#include "mstcar/model.hpp"

namespace mstcar {

double quantile_type7(std::vector<double> values, double prob) {
  if (values.empty()) throw InsufficientDraws("quantile of empty sample");
  if (!(prob >= 0.0 && prob <= 1.0))
    throw Error("quantile probability outside [0,1]");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * prob;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= values.size()) return values.back();
  return values[lo] + (h - std::floor(h)) * (values[lo + 1] - values[lo]);
}

IntervalSummary summarize_draws(std::vector<double> draws) {
  if (draws.empty()) throw InsufficientDraws("summary of empty sample");
  std::sort(draws.begin(), draws.end());
  const auto q = [&](double p) {
    const double h = (static_cast<double>(draws.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    if (lo + 1 >= draws.size()) return draws.back();
    return draws[lo] + (h - std::floor(h)) * (draws[lo + 1] - draws[lo]);
  };
  return {q(0.5), q(0.025), q(0.975)};
}

namespace {

// State assembled from one stored draw (or from posterior means); the
// completed-data matrix is only a placeholder since deviance reads observed
// cells.
ModelState state_from_draw(const PosteriorSamples& s, const RateDataset& data,
                           int draw) {
  ModelState st;
  st.beta = s.beta[static_cast<std::size_t>(draw)];
  st.z = s.z[static_cast<std::size_t>(draw)];
  st.cov.g = s.g[static_cast<std::size_t>(draw)];
  st.cov.rho = s.rho[static_cast<std::size_t>(draw)];
  st.cov.tau2 = s.tau2[static_cast<std::size_t>(draw)];
  st.y = data.y;
  return st;
}

}  // namespace

DicResult dic(const PosteriorSamples& samples, const RateDataset& data) {
  const int n = samples.n_draws();
  if (n < 2) throw InsufficientDraws("DIC needs at least 2 stored draws");
  double d_bar = 0.0;
  for (int s = 0; s < n; ++s) {
    const ModelState st = state_from_draw(samples, data, s);
    d_bar += -2.0 * log_likelihood(data, st, CellSet::Observed);
  }
  d_bar /= n;

  ModelState at_mean = state_from_draw(samples, data, 0);
  at_mean.beta.setZero();
  at_mean.z.setZero();
  at_mean.cov.tau2.setZero();
  for (int s = 0; s < n; ++s) {
    at_mean.beta += samples.beta[static_cast<std::size_t>(s)];
    at_mean.z += samples.z[static_cast<std::size_t>(s)];
    at_mean.cov.tau2 += samples.tau2[static_cast<std::size_t>(s)];
  }
  at_mean.beta /= n;
  at_mean.z /= n;
  at_mean.cov.tau2 /= n;
  const double d_at_mean =
      -2.0 * log_likelihood(data, at_mean, CellSet::Observed);

  DicResult out;
  out.d_bar = d_bar;
  out.d_at_mean = d_at_mean;
  out.p_d = d_bar - d_at_mean;
  out.dic = d_bar + out.p_d;
  return out;
}

std::vector<SummaryRow> summarize_samples(const PosteriorSamples& samples) {
  const int n = samples.n_draws();
  if (n < 1) throw InsufficientDraws("no stored draws");
  std::vector<SummaryRow> rows;
  std::vector<double> buf(static_cast<std::size_t>(n));
  const auto summary_of = [&](auto&& getter) {
    for (int s = 0; s < n; ++s) buf[static_cast<std::size_t>(s)] = getter(s);
    return summarize_draws(buf);
  };

  for (int k = 0; k < samples.n_groups; ++k)
    for (int j = 0; j < samples.p; ++j)
      rows.push_back({"beta", -1, k, j, summary_of([&](int s) {
                        return samples.beta[static_cast<std::size_t>(s)](k, j);
                      })});
  for (int i = 0; i < samples.n_sites; ++i)
    for (int t = 0; t < samples.n_time; ++t)
      for (int k = 0; k < samples.n_groups; ++k) {
        const int c = t * samples.n_groups + k;
        rows.push_back({"z", i, k, t, summary_of([&](int s) {
                          return samples.z[static_cast<std::size_t>(s)](i, c);
                        })});
      }
  for (int t = 0; t < samples.n_time; ++t)
    for (int k = 0; k < samples.n_groups; ++k)
      rows.push_back({"g_diag", -1, k, t, summary_of([&](int s) {
                        return samples.g[static_cast<std::size_t>(s)]
                            [static_cast<std::size_t>(t)](k, k);
                      })});
  for (int t = 0; t < samples.n_time; ++t)
    for (int k = 0; k < samples.n_groups; ++k)
      for (int k2 = k + 1; k2 < samples.n_groups; ++k2)
        rows.push_back({"g_offdiag", k2, k, t, summary_of([&](int s) {
                          return samples.g[static_cast<std::size_t>(s)]
                              [static_cast<std::size_t>(t)](k, k2);
                        })});
  for (int k = 0; k < samples.n_groups; ++k)
    rows.push_back({"tau2", -1, k, -1, summary_of([&](int s) {
                      return samples.tau2[static_cast<std::size_t>(s)][k];
                    })});
  for (int k = 0; k < samples.n_groups; ++k)
    rows.push_back({"rho", -1, k, -1, summary_of([&](int s) {
                      return samples.rho[static_cast<std::size_t>(s)][k];
                    })});
  for (std::size_t m = 0; m < samples.missing_cells.size(); ++m) {
    const auto [i, c] = samples.missing_cells[m];
    const int t = c / samples.n_groups;
    const int k = c % samples.n_groups;
    rows.push_back({"y_u", i, k, t, summary_of([&](int s) {
                      return samples.y_u[static_cast<std::size_t>(s)]
                          [static_cast<Eigen::Index>(m)];
                    })});
  }
  return rows;
}

std::vector<IntervalSummary> nationwide_trend(const PosteriorSamples& samples,
                                              const RateDataset& data,
                                              int group) {
  const int n = samples.n_draws();
  if (n < 1) throw InsufficientDraws("no stored draws");
  if (group < 0 || group >= data.n_groups)
    throw DimensionMismatch("group index out of range");
  std::vector<IntervalSummary> out;
  std::vector<double> buf(static_cast<std::size_t>(n));
  for (int t = 0; t < data.n_time; ++t) {
    const int c = data.col(group, t);
    const double total_pop = data.pop.col(c).sum();
    if (!(total_pop > 0.0))
      throw ZeroTotalPopulation("group " + std::to_string(group) + ", time " +
                                std::to_string(t));
    for (int s = 0; s < n; ++s) {
      const auto& beta = samples.beta[static_cast<std::size_t>(s)];
      const auto& z = samples.z[static_cast<std::size_t>(s)];
      double weighted = 0.0;
      for (int i = 0; i < data.n_sites; ++i)
        weighted +=
            (data.fixed_effect(i, group, t, beta) + z(i, c)) * data.pop(i, c);
      buf[static_cast<std::size_t>(s)] = weighted / total_pop;
    }
    out.push_back(summarize_draws(buf));
  }
  return out;
}

std::vector<SummaryRow> sigma_eta_summary(const PosteriorSamples& samples) {
  const int n = samples.n_draws();
  if (n < 1) throw InsufficientDraws("no stored draws");
  const int ng = samples.n_groups;
  const int nt = samples.n_time;
  std::vector<Eigen::MatrixXd> sigmas;
  sigmas.reserve(static_cast<std::size_t>(n));
  for (int s = 0; s < n; ++s) {
    CovarianceSpec spec;
    spec.g = samples.g[static_cast<std::size_t>(s)];
    spec.rho = samples.rho[static_cast<std::size_t>(s)];
    spec.tau2 = samples.tau2[static_cast<std::size_t>(s)];
    sigmas.push_back(assemble_sigma_eta(spec));
  }
  std::vector<SummaryRow> rows;
  std::vector<double> buf(static_cast<std::size_t>(n));
  for (int t = 0; t < nt; ++t)
    for (int k = 0; k < ng; ++k) {
      const int c = t * ng + k;
      for (int s = 0; s < n; ++s)
        buf[static_cast<std::size_t>(s)] =
            sigmas[static_cast<std::size_t>(s)](c, c);
      rows.push_back({"sigma_diag", -1, k, t, summarize_draws(buf)});
    }
  for (int t = 0; t < nt; ++t)
    for (int k = 0; k < ng; ++k)
      for (int k2 = k + 1; k2 < ng; ++k2) {
        const int a = t * ng + k;
        const int b = t * ng + k2;
        for (int s = 0; s < n; ++s) {
          const auto& sig = sigmas[static_cast<std::size_t>(s)];
          buf[static_cast<std::size_t>(s)] =
              sig(a, b) / std::sqrt(sig(a, a) * sig(b, b));
        }
        rows.push_back({"sigma_corr", k2, k, t, summarize_draws(buf)});
      }
  return rows;
}

double coverage_score(const std::vector<double>& truth,
                      const std::vector<IntervalSummary>& intervals) {
  if (truth.size() != intervals.size())
    throw DimensionMismatch("truth and interval counts differ");
  if (truth.empty()) throw DimensionMismatch("empty parameter set");
  std::size_t covered = 0;
  for (std::size_t i = 0; i < truth.size(); ++i)
    if (intervals[i].covers(truth[i])) ++covered;
  return 100.0 * static_cast<double>(covered) /
         static_cast<double>(truth.size());
}

double geweke_z(const std::vector<double>& trace) {
  const std::size_t n = trace.size();
  if (n < 10) throw InsufficientDraws("Geweke check needs >= 10 draws");
  const std::size_t n1 = std::max<std::size_t>(2, n / 5);
  const std::size_t n2 = std::max<std::size_t>(2, n / 2);
  const auto moments = [&](std::size_t begin, std::size_t count) {
    double mean = 0.0;
    for (std::size_t i = begin; i < begin + count; ++i) mean += trace[i];
    mean /= static_cast<double>(count);
    double var = 0.0;
    for (std::size_t i = begin; i < begin + count; ++i)
      var += (trace[i] - mean) * (trace[i] - mean);
    var /= static_cast<double>(count - 1);
    return std::pair{mean, var};
  };
  const auto [m1, v1] = moments(0, n1);
  const auto [m2, v2] = moments(n - n2, n2);
  const double denom = std::sqrt(v1 / static_cast<double>(n1) +
                                 v2 / static_cast<double>(n2));
  if (denom == 0.0) return 0.0;
  return (m1 - m2) / denom;
}

}  // namespace mstcar
