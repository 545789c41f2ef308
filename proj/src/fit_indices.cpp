#include <algorithm>
#include <cmath>

#include "mcms/distributions.hpp"
#include "mcms/errors.hpp"
#include "mcms/sem.hpp"

namespace mcms {

namespace {

// Largest ncp with P(chisq_df,ncp <= t) = target, by bracketed bisection.
// Returns 0 when even ncp=0 puts less mass than `target` below t.
double solve_ncp(double t, double df, double target) {
  if (t <= 0.0) return 0.0;
  if (noncentral_chisq_cdf(t, df, 0.0) < target) return 0.0;
  double lo = 0.0;
  double hi = std::max(1.0, t - df);
  int guard = 0;
  while (noncentral_chisq_cdf(t, df, hi) > target && guard++ < 80) hi *= 2.0;
  for (int i = 0; i < 300 && hi - lo > 1e-8; ++i) {
    const double mid = 0.5 * (lo + hi);
    if (noncentral_chisq_cdf(t, df, mid) > target)
      lo = mid;
    else
      hi = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

double rmsea_from_stat(double t, int df, double m_total, int n_groups) {
  if (df <= 0) return 0.0;
  return std::sqrt(n_groups * std::max(t - df, 0.0) / (df * m_total));
}

std::pair<double, double> rmsea_ci90(double t, int df, double m_total, int n_groups) {
  if (df <= 0) return {0.0, 0.0};
  const double ncp_lo = solve_ncp(t, df, 0.95);
  const double ncp_hi = solve_ncp(t, df, 0.05);
  return {std::sqrt(n_groups * ncp_lo / (df * m_total)),
          std::sqrt(n_groups * ncp_hi / (df * m_total))};
}

FitIndices indices_from_stats(double t, int df, double t_baseline, int df_baseline,
                              double m_total, int n_groups) {
  FitIndices out;
  out.chisq = t;
  out.df = df;
  out.baseline_chisq = t_baseline;
  out.baseline_df = df_baseline;

  const double excess = std::max(t - df, 0.0);
  const double excess_b = std::max(t_baseline - df_baseline, 0.0);
  const double denom = std::max(excess_b, excess);
  out.cfi = denom <= 0.0 ? 1.0 : 1.0 - excess / denom;

  if (df == 0) {
    out.tli = 1.0;
  } else {
    const double ratio_b = t_baseline / df_baseline;
    out.tli = ratio_b == 1.0 ? 1.0 : (ratio_b - t / df) / (ratio_b - 1.0);
  }

  out.rmsea = rmsea_from_stat(t, df, m_total, n_groups);
  std::tie(out.rmsea_lo, out.rmsea_hi) = rmsea_ci90(t, df, m_total, n_groups);
  return out;
}

FitIndices fit_indices(const FitResult& fit, const std::vector<SampleMoments>& moments,
                       bool use_scaled) {
  const CompiledModel& model = *fit.model;

  FitResult baseline = fit_baseline(model.items, model.group_labels, moments,
                                    model.mean_structure, fit.multiplier);

  double t = fit.chisq;
  double t_b = baseline.chisq;
  double sb_scale = std::numeric_limits<double>::quiet_NaN();
  double chisq_sb = std::numeric_limits<double>::quiet_NaN();
  if (use_scaled) {
    const SbResult sb = satorra_bentler(fit, moments);
    sb_scale = sb.scale;
    chisq_sb = sb.chisq_sb;
    t = sb.chisq_sb;
    const SbResult sb_b = satorra_bentler(baseline, moments);
    t_b = sb_b.chisq_sb;
  }

  const int G = model.n_groups();
  FitIndices out =
      indices_from_stats(t, fit.df, t_b, baseline.df, fit.total_multiplier(), G);
  out.chisq = fit.chisq;
  out.scaled = use_scaled;
  out.sb_scale = sb_scale;
  out.chisq_sb = chisq_sb;

  // SRMR over the lower covariance triangle (diagonal included), groups
  // weighted by sample size.
  long total_n = 0;
  for (const auto& mom : moments) total_n += mom.n;
  double srmr = 0.0;
  const int p = model.p();
  for (int g = 0; g < G; ++g) {
    const ImpliedMoments im = implied_moments(model, g, fit.theta);
    const Matrix& s = moments[g].cov;
    double ss = 0.0;
    for (int i = 0; i < p; ++i)
      for (int j = 0; j <= i; ++j) {
        const double e = (s(i, j) - im.sigma(i, j)) / std::sqrt(s(i, i) * s(j, j));
        ss += e * e;
      }
    srmr += (static_cast<double>(moments[g].n) / total_n) * std::sqrt(ss / vech_size(p));
  }
  out.srmr = srmr;
  return out;
}

FitIndices fit_indices(const FitResult& fit, const SampleMoments& moments, bool use_scaled) {
  return fit_indices(fit, std::vector<SampleMoments>{moments}, use_scaled);
}

void apply_fit_indices(FitResult& fit, const std::vector<SampleMoments>& moments,
                       bool use_scaled) {
  fit.indices = fit_indices(fit, moments, use_scaled);
  fit.has_indices = true;
  if (use_scaled) {
    fit.sb_scale = fit.indices.sb_scale;
    fit.chisq_sb = fit.indices.chisq_sb;
  }
}

}  // namespace mcms
