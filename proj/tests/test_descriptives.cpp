#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "helpers.hpp"
#include "mcms/descriptives.hpp"
#include "mcms/errors.hpp"
#include "mcms/simulate.hpp"

using namespace mcms;

namespace {

ResponseMatrix matrix_for(const ScaleDefinition& def, const Matrix& rows) {
  ResponseMatrix m;
  m.items = def.flattened_items();
  m.group = "G";
  m.rows = rows;
  return m;
}

}  // namespace

TEST_CASE("composite stats: constant and two-point cases") {
  const ScaleDefinition def = builtin_mcms();

  SUBCASE("all sevens") {
    Matrix rows = Matrix::Constant(1, 18, 7.0);
    const CompositeStats cs = composite_stats(matrix_for(def, rows), def);
    for (int f = 0; f < 6; ++f) {
      CHECK(cs.mean[f] == doctest::Approx(7.0));
      CHECK(cs.sd[f] == 0.0);
    }
  }
  SUBCASE("two respondents, 1s and 3s") {
    Matrix rows(2, 18);
    rows.row(0).setConstant(1.0);
    rows.row(1).setConstant(3.0);
    const CompositeStats cs = composite_stats(matrix_for(def, rows), def);
    for (int f = 0; f < 6; ++f) {
      CHECK(cs.mean[f] == doctest::Approx(2.0));
      CHECK(cs.sd[f] == doctest::Approx(std::sqrt(2.0)));
    }
  }
}

TEST_CASE("composite means track the generating intercepts") {
  GeneratorConfig cfg = builtin_mcms_generator();
  cfg.n_per_group = {50000};
  cfg.seed = 3;
  const auto sim = simulate_responses(cfg);
  const CompositeStats cs = composite_stats(sim.at("SIM").matrix, cfg.scale);
  const GroupParams& gp = cfg.groups[0];
  for (int f = 0; f < 6; ++f) {
    const double expected = (gp.tau[3 * f] + gp.tau[3 * f + 1] + gp.tau[3 * f + 2]) / 3.0;
    CHECK(std::abs(cs.mean[f] - expected) < 0.05);
  }
}

TEST_CASE("composite correlations: structure and attenuated recovery") {
  GeneratorConfig cfg = builtin_mcms_generator();
  cfg.n_per_group = {50000};
  cfg.seed = 4;
  const auto sim = simulate_responses(cfg);
  const CompositeCorrelations cc = composite_correlations(sim.at("SIM").matrix, cfg.scale);

  CHECK(cc.corr.rows() == 6);
  for (int i = 0; i < 6; ++i) CHECK(cc.corr(i, i) == 1.0);
  CHECK((cc.corr - cc.corr.transpose()).norm() == 0.0);
  CHECK((cc.corr.array().abs() <= 1.0 + 1e-12).all());

  // positive semidefinite
  Eigen::SelfAdjointEigenSolver<Matrix> eig(cc.corr);
  CHECK(eig.eigenvalues().minCoeff() > -1e-10);

  // intrinsic vs amotivation: attenuated latent correlation, analytic value
  // sum(lambda)/3 scaling on both sides gives about -0.442
  CHECK(std::abs(cc.corr(5, 0) - (-0.43)) < 0.05);
  CHECK(cc.p_values(5, 0) < 1e-6);
}

TEST_CASE("independent factors decorrelate as n grows") {
  GeneratorConfig cfg = builtin_mcms_generator();
  cfg.groups[0].phi = Matrix::Identity(6, 6);
  cfg.n_per_group = {20000};
  cfg.seed = 5;
  const auto sim = simulate_responses(cfg);
  const CompositeCorrelations cc = composite_correlations(sim.at("SIM").matrix, cfg.scale);
  const double bound = 3.0 / std::sqrt(20000.0);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < i; ++j) CHECK(std::abs(cc.corr(i, j)) < bound);
}

TEST_CASE("duplicated factor answers correlate perfectly") {
  ScaleDefinition def;
  def.name = "t";
  def.stem = "s";
  def.factors = {{"F1", {"a1", "a2"}, "a1"}, {"F2", {"b1", "b2"}, "b1"}};
  Matrix rows(4, 4);
  // F2 items copy F1 items so the composites are identical per respondent
  rows << 1, 2, 1, 2,
          3, 4, 3, 4,
          5, 5, 5, 5,
          2, 6, 2, 6;
  ResponseMatrix m;
  m.items = def.flattened_items();
  m.group = "G";
  m.rows = rows;
  const CompositeCorrelations cc = composite_correlations(m, def);
  CHECK(cc.corr(0, 1) == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("zero variance composite is flagged undefined") {
  const ScaleDefinition def = builtin_mcms();
  Matrix rows(3, 18);
  rows.setConstant(4.0);
  // give factors >0 variance except the first
  for (int r = 0; r < 3; ++r)
    for (int c = 3; c < 18; ++c) rows(r, c) = 1.0 + ((r + c) % 5);
  const CompositeCorrelations cc = composite_correlations(matrix_for(def, rows), def);
  CHECK(!cc.undefined.empty());
  CHECK(std::isnan(cc.corr(0, 1)));
}

TEST_CASE("alpha: exact parallel-item dataset") {
  // sample covariance is exactly compound symmetric with rho = 1/2
  const ScaleDefinition def{"t", "s", 1, 7, {{"F", {"x", "y", "z"}, "x"}}};
  Matrix rows(4, 3);
  rows << 3, 2, 2,
          2, 3, 2,
          2, 2, 3,
          1, 1, 1;
  ResponseMatrix m;
  m.items = {"x", "y", "z"};
  m.group = "G";
  m.rows = rows;
  const AlphaEstimate a = cronbach_alpha(m, def, "F");
  CHECK(std::abs(a.alpha - 0.75) < 1e-12);  // Spearman-Brown: 3*.5/(1+2*.5)
  CHECK(a.ci_low <= a.alpha);
  CHECK(a.ci_high >= a.alpha);
  CHECK(a.k == 3);
  CHECK(a.n == 4);

  SUBCASE("shifting one item leaves alpha unchanged") {
    Matrix shifted = rows;
    shifted.col(1).array() += 3.0;
    ResponseMatrix m2 = m;
    m2.rows = shifted;
    const AlphaEstimate b = cronbach_alpha(m2, def, "F");
    CHECK(b.alpha == doctest::Approx(a.alpha).epsilon(1e-12));
  }
}

TEST_CASE("alpha of uncorrelated items is near zero and can be negative") {
  Matrix cov = Matrix::Identity(3, 3);
  CHECK(cronbach_alpha_from_cov(cov) == doctest::Approx(0.0));
  // negative when total variance is dominated by the diagonal
  cov(0, 1) = cov(1, 0) = -0.3;
  CHECK(cronbach_alpha_from_cov(cov) < 0.0);
  CHECK(cronbach_alpha_from_cov(cov) <= 1.0);
}

TEST_CASE("Feldt interval achieves nominal coverage") {
  // parallel items, true alpha = k*rho/(1+(k-1)rho) = 0.75
  const double rho = 0.5;
  const int k = 3;
  const long n = 200;
  const double true_alpha = k * rho / (1.0 + (k - 1) * rho);
  const ScaleDefinition def{"t", "s", 1, 7, {{"F", {"x", "y", "z"}, "x"}}};

  Rng rng(2024);
  int covered = 0;
  const int reps = 500;
  for (int rep = 0; rep < reps; ++rep) {
    Matrix rows(n, k);
    for (long i = 0; i < n; ++i) {
      const double f = rng.normal() * std::sqrt(rho);
      for (int j = 0; j < k; ++j) rows(i, j) = f + rng.normal() * std::sqrt(1.0 - rho);
    }
    ResponseMatrix m;
    m.items = {"x", "y", "z"};
    m.group = "G";
    m.rows = rows;
    const AlphaEstimate a = cronbach_alpha(m, def, "F");
    if (a.ci_low <= true_alpha && true_alpha <= a.ci_high) ++covered;
  }
  const double coverage = static_cast<double>(covered) / reps;
  CHECK(coverage >= 0.92);
  CHECK(coverage <= 0.98);
}

TEST_CASE("alpha precondition failures") {
  const ScaleDefinition def{"t", "s", 1, 7, {{"F", {"x", "y"}, "x"}}};
  ResponseMatrix m;
  m.items = {"x", "y"};
  m.group = "G";
  m.rows = Matrix::Constant(5, 2, 3.0);
  CHECK_THROWS_AS(cronbach_alpha(m, def, "F"), FitError);      // zero total variance
  CHECK_THROWS_AS(cronbach_alpha(m, def, "Nope"), ConfigError);  // unknown factor
}
