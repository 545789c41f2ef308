#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "helpers.hpp"
#include "mcms/model_spec.hpp"
#include "mcms/sem.hpp"
#include "mcms/simulate.hpp"

using namespace mcms;
using mcms::testing::simulated_moments;
using mcms::testing::theta_from_params;

TEST_CASE("published fit-table arithmetic reproduces") {
  // T=1590.49, df=120, N=5857 with the n-1 convention
  const double rmsea = rmsea_from_stat(1590.49, 120, 5856.0);
  CHECK(std::abs(rmsea - 0.046) < 0.001);
  CHECK(rmsea == doctest::Approx(0.0457446).epsilon(1e-4));
  const auto [lo, hi] = rmsea_ci90(1590.49, 120, 5856.0);
  CHECK(std::abs(lo - 0.044) < 0.001);
  CHECK(std::abs(hi - 0.048) < 0.001);
}

TEST_CASE("index formulas at the boundaries") {
  SUBCASE("T equal to df: perfect noncentrality") {
    const FitIndices idx = indices_from_stats(120.0, 120, 2000.0, 153, 700.0);
    CHECK(idx.rmsea == 0.0);
    CHECK(idx.cfi == 1.0);
    CHECK(idx.tli >= 1.0);
  }
  SUBCASE("saturated model") {
    const FitIndices idx = indices_from_stats(0.0, 0, 900.0, 153, 700.0);
    CHECK(idx.rmsea == 0.0);
    CHECK(idx.cfi == 1.0);
    CHECK(idx.tli == 1.0);
    CHECK(idx.rmsea_lo == 0.0);
    CHECK(idx.rmsea_hi == 0.0);
  }
  SUBCASE("CFI stays in [0,1] even for terrible fits") {
    const FitIndices idx = indices_from_stats(5000.0, 120, 900.0, 153, 700.0);
    CHECK(idx.cfi >= 0.0);
    CHECK(idx.cfi <= 1.0);
  }
}

TEST_CASE("perfect-fit oracle: all indices at their ideals") {
  const GroupParams gp = builtin_mcms_parameters();
  const FactorModelSpec spec = compile_model(builtin_mcms());
  const CompiledModel model = compile_single_group(spec);
  const Vector theta0 = theta_from_params(model, gp);
  const ImpliedMoments im = implied_moments(model, 0, theta0);
  const SampleMoments moments =
      moments_from_values(builtin_mcms().flattened_items(), 2000, im.mu, im.sigma);

  FitResult fit = fit_model(spec, moments);
  REQUIRE(fit.converged);
  const FitIndices idx = fit_indices(fit, moments, false);
  CHECK(fit.fmin < 1e-10);
  CHECK(idx.chisq < 1e-6);
  CHECK(idx.cfi == 1.0);
  CHECK(idx.rmsea == 0.0);
  CHECK(idx.srmr < 1e-6);
  CHECK(idx.tli >= 1.0);
}

TEST_CASE("well-specified model fits well, independence model fits poorly") {
  const SampleMoments moments = simulated_moments(3000, 101, true);
  FitResult fit = fit_model(compile_model(builtin_mcms()), moments);
  REQUIRE(fit.converged);

  SUBCASE("unscaled") {
    const FitIndices idx = fit_indices(fit, moments, false);
    CHECK(idx.cfi > 0.99);
    CHECK(idx.rmsea < 0.02);
    CHECK(idx.srmr < 0.03);
    CHECK(idx.tli > 0.99);
    CHECK(idx.baseline_chisq > idx.chisq);
    CHECK(idx.baseline_df == 153);
    CHECK(idx.rmsea_lo <= idx.rmsea_hi);
  }
  SUBCASE("scaled indices substitute the corrected statistic") {
    const FitIndices idx = fit_indices(fit, moments, true);
    CHECK(idx.scaled);
    CHECK(idx.sb_scale > 0.5);
    CHECK(idx.chisq_sb == doctest::Approx(idx.chisq / idx.sb_scale));
    CHECK(idx.cfi > 0.99);
  }
}

TEST_CASE("a misspecified model is penalized") {
  // fit a restricted model to data generated with correlated factors
  ModelOptions opt;
  opt.zero_factor_covariances = {
      {"Material External Regulation", "Intrinsic Motivation"},
      {"Social External Regulation", "Intrinsic Motivation"},
      {"Amotivation", "Intrinsic Motivation"},
      {"Identified Regulation", "Intrinsic Motivation"},
      {"Introjected Regulation", "Intrinsic Motivation"}};
  const SampleMoments moments = simulated_moments(3000, 103, false);
  FitResult fit = fit_model(compile_model(builtin_mcms(), opt), moments);
  const FitIndices idx = fit_indices(fit, moments, false);
  CHECK(idx.chisq / idx.df > 3.0);
  CHECK(idx.rmsea > 0.02);
  CHECK(idx.cfi < 0.995);
}

TEST_CASE("baseline fit has the closed-form statistic") {
  const SampleMoments moments = simulated_moments(1500, 107, false);
  const FitResult baseline = fit_baseline(builtin_mcms().flattened_items(), {"G"},
                                          {moments}, true, ChisqMultiplier::NMinus1);
  // F = sum(log s_ii) - log|S|
  double expect = -0.0;
  Eigen::LLT<Matrix> llt(moments.cov);
  const double logdet =
      2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  expect = moments.cov.diagonal().array().log().sum() - logdet;
  CHECK(baseline.fmin == doctest::Approx(expect).epsilon(1e-10));
  CHECK(baseline.df == 153);
  CHECK(baseline.converged);
}
