#pragma once

namespace mcms {

/// Central chi-squared CDF.
double chisq_cdf(double x, double df);

/// Noncentral chi-squared CDF, evaluated as a Poisson(ncp/2) mixture of
/// central chi-squared CDFs. Series terms are added symmetrically around the
/// Poisson mode and truncated once the remaining probability mass is below
/// 1e-14.
double noncentral_chisq_cdf(double x, double df, double ncp);

/// Two-sided p-value of a correlation r at sample size n (t with n-2 df).
double correlation_p_value(double r, long n);

/// Student-t CDF.
double student_t_cdf(double x, double df);

/// Quantile of the F distribution.
double f_quantile(double p, double df1, double df2);

}  // namespace mcms
