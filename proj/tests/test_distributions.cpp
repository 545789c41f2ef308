#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "mcms/distributions.hpp"
#include "mcms/simulate.hpp"

using namespace mcms;

TEST_CASE("noncentral chi-squared CDF limits and special cases") {
  CHECK(noncentral_chisq_cdf(1e7, 3, 10) == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(noncentral_chisq_cdf(0.0, 3, 10) == 0.0);
  // ncp=0, df=2: exponential tail, 1 - e^{-x/2}
  CHECK(noncentral_chisq_cdf(2.0, 2, 0.0) ==
        doctest::Approx(1.0 - std::exp(-1.0)).epsilon(1e-10));
}

TEST_CASE("noncentral CDF matches frozen reference values") {
  // reference values from an independent implementation
  CHECK(noncentral_chisq_cdf(5, 3, 4) == doctest::Approx(0.3993341895370014).epsilon(1e-9));
  CHECK(noncentral_chisq_cdf(10, 5, 2.5) == doctest::Approx(0.7551199172247817).epsilon(1e-9));
  CHECK(noncentral_chisq_cdf(1, 1, 0.5) == doctest::Approx(0.571297010386746).epsilon(1e-9));
}

TEST_CASE("ncp=0 equals the central CDF on a grid") {
  for (double df : {1.0, 2.0, 5.0, 17.0, 120.0})
    for (double x : {0.5, 1.0, 3.0, 10.0, 50.0, 200.0})
      CHECK(noncentral_chisq_cdf(x, df, 0.0) == doctest::Approx(chisq_cdf(x, df)).epsilon(1e-10));
}

TEST_CASE("monotone in x") {
  double prev = -1.0;
  for (double x = 0.0; x <= 40.0; x += 0.5) {
    const double v = noncentral_chisq_cdf(x, 4, 7);
    CHECK(v >= prev);
    prev = v;
  }
}

TEST_CASE("CDF agrees with Monte Carlo sampling") {
  // chi^2_df(ncp) as sum of squared shifted normals, 10^6 draws
  const int df = 3;
  const double ncp = 4.0;
  const double delta = std::sqrt(ncp / df);
  Rng rng(99);
  const int n = 1000000;
  const double xs[] = {3.0, 5.0, 9.0, 14.0};
  int below[4] = {0, 0, 0, 0};
  for (int i = 0; i < n; ++i) {
    double s = 0.0;
    for (int k = 0; k < df; ++k) {
      const double z = rng.normal() + delta;
      s += z * z;
    }
    for (int j = 0; j < 4; ++j)
      if (s <= xs[j]) ++below[j];
  }
  for (int j = 0; j < 4; ++j) {
    const double p = noncentral_chisq_cdf(xs[j], df, ncp);
    const double mc = static_cast<double>(below[j]) / n;
    const double se = std::sqrt(p * (1.0 - p) / n);
    CHECK(std::abs(mc - p) <= 3.0 * se);
  }
}

TEST_CASE("t and F wrappers behave") {
  CHECK(student_t_cdf(0.0, 10) == doctest::Approx(0.5));
  CHECK(student_t_cdf(100.0, 10) == doctest::Approx(1.0).epsilon(1e-9));
  // complement identity: Q(p; d1, d2) * Q(1-p; d2, d1) = 1
  CHECK(f_quantile(0.6, 10, 10) * f_quantile(0.4, 10, 10) == doctest::Approx(1.0).epsilon(1e-9));
  CHECK(f_quantile(0.975, 20, 40) > 1.0);
  CHECK(correlation_p_value(0.0, 100) == doctest::Approx(1.0));
  CHECK(correlation_p_value(0.9, 100) < 1e-6);
}
