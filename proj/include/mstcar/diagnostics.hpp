#pragma once

#include <string>
#include <vector>

#include "mstcar/data.hpp"
#include "mstcar/sampler.hpp"

namespace mstcar {

// Equal-tail 95% summary of one scalar parameter's draws.
struct IntervalSummary {
  double median = 0.0;
  double lo95 = 0.0;
  double hi95 = 0.0;

  bool covers(double truth) const { return lo95 <= truth && truth <= hi95; }
};

// Linear-interpolation quantile (type 7): h = (n-1)p, interpolate between
// order statistics floor(h) and floor(h)+1. Pinned so reimplementations in
// other languages agree to 1e-12.
double quantile_type7(std::vector<double> values, double prob);

IntervalSummary summarize_draws(std::vector<double> draws);

struct DicResult {
  double dic = 0.0;
  double p_d = 0.0;
  double d_bar = 0.0;
  double d_at_mean = 0.0;
};

// Deviance over observed cells only: D = -2 log likelihood. The plug-in
// deviance is evaluated at the posterior means of beta, z, tau2; imputed
// values are parameters, not data, and stay out of both terms.
DicResult dic(const PosteriorSamples& samples, const RateDataset& data);

// Flat summary row; site/group/time are -1 where not applicable. For the
// g_offdiag and sigma_corr families `site` carries the second group index.
struct SummaryRow {
  std::string family;
  int site = -1;
  int group = -1;
  int time = -1;
  IntervalSummary interval;
};

// Families: beta, z, g_diag, g_offdiag, tau2, rho, y_u.
std::vector<SummaryRow> summarize_samples(const PosteriorSamples& samples);

// Population-weighted fitted-value trend for one group: one summary per time
// point of sum_i (x'beta + z) * n / sum_i n across draws.
std::vector<IntervalSummary> nationwide_trend(const PosteriorSamples& samples,
                                              const RateDataset& data,
                                              int group);

// Per-draw assembly of the group-time cross covariance; summaries of its
// diagonal (family sigma_diag) and of the within-time between-group
// correlations (family sigma_corr).
std::vector<SummaryRow> sigma_eta_summary(const PosteriorSamples& samples);

// Percent of intervals covering the matched truth.
double coverage_score(const std::vector<double>& truth,
                      const std::vector<IntervalSummary>& intervals);

// Mean comparison between the first 20% and last 50% of a trace,
// standardized by the usual two-sample error; |z| ~ O(1) for a stationary
// chain.
double geweke_z(const std::vector<double>& trace);

}  // namespace mstcar
