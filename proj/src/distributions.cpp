#include "mcms/distributions.hpp"

#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/fisher_f.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>

namespace mcms {

double chisq_cdf(double x, double df) {
  if (x <= 0.0) return 0.0;
  return boost::math::gamma_p(df / 2.0, x / 2.0);
}

double noncentral_chisq_cdf(double x, double df, double ncp) {
  if (x <= 0.0) return 0.0;
  if (ncp <= 0.0) return chisq_cdf(x, df);

  const double lambda = ncp / 2.0;
  const double tol = 1e-14;

  // Start at the Poisson mode and expand in both directions; the weights
  // around the mode carry nearly all of the mass, so truncation works from
  // a handful of terms even for large ncp.
  const long k0 = static_cast<long>(std::floor(lambda));
  auto log_pois = [&](long k) {
    return -lambda + k * std::log(lambda) - std::lgamma(static_cast<double>(k) + 1.0);
  };

  double sum = 0.0;
  double mass = 0.0;  // Poisson mass accounted for so far

  double wk = std::exp(log_pois(k0));
  double w = wk;
  for (long k = k0; ; ++k) {
    sum += w * chisq_cdf(x, df + 2.0 * static_cast<double>(k));
    mass += w;
    w *= lambda / static_cast<double>(k + 1);
    if (w < tol && k > k0 + 4) break;
    if (k - k0 > 100000) break;
  }
  w = wk * static_cast<double>(k0) / lambda;  // weight at k0-1
  for (long k = k0 - 1; k >= 0; --k) {
    sum += w * chisq_cdf(x, df + 2.0 * static_cast<double>(k));
    mass += w;
    if (1.0 - mass < tol) break;
    w *= static_cast<double>(k) / lambda;
  }
  return std::min(1.0, sum);
}

double student_t_cdf(double x, double df) {
  boost::math::students_t dist(df);
  return boost::math::cdf(dist, x);
}

double correlation_p_value(double r, long n) {
  if (n < 3) return 1.0;
  const double denom = 1.0 - r * r;
  if (denom <= 0.0) return 0.0;
  const double t = r * std::sqrt(static_cast<double>(n - 2) / denom);
  return 2.0 * (1.0 - student_t_cdf(std::abs(t), static_cast<double>(n - 2)));
}

double f_quantile(double p, double df1, double df2) {
  boost::math::fisher_f dist(df1, df2);
  return boost::math::quantile(dist, p);
}

}  // namespace mcms
