#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "helpers.hpp"
#include "mcms/errors.hpp"
#include "mcms/ingest.hpp"
#include "mcms/simulate.hpp"

using namespace mcms;

TEST_CASE("identical seed and config give bit-identical output") {
  GeneratorConfig cfg = builtin_mcms_generator();
  cfg.n_per_group = {200};
  cfg.spam_fraction = 0.3;
  cfg.seed = 42;
  const auto a = simulate_responses(cfg);
  const auto b = simulate_responses(cfg);
  CHECK(a.at("SIM").matrix.rows == b.at("SIM").matrix.rows);
  CHECK(a.at("SIM").is_spammer == b.at("SIM").is_spammer);

  cfg.seed = 43;
  const auto c = simulate_responses(cfg);
  CHECK(a.at("SIM").matrix.rows != c.at("SIM").matrix.rows);
}

TEST_CASE("degenerate generator in likert mode emits rounded clipped intercepts") {
  GeneratorConfig cfg = builtin_mcms_generator();
  cfg.mode = DataMode::Likert;
  cfg.n_per_group = {20};
  cfg.groups[0].phi *= 1e-18;
  cfg.groups[0].theta_diag.setConstant(1e-18);
  const auto sim = simulate_responses(cfg);
  const auto& m = sim.at("SIM").matrix;
  for (long r = 0; r < m.n(); ++r)
    for (int c = 0; c < m.p(); ++c) {
      const double expected =
          std::round(std::min(std::max(cfg.groups[0].tau[c], 1.0), 7.0));
      CHECK(m.rows(r, c) == expected);
    }
}

TEST_CASE("likert mode never leaves the response range") {
  GeneratorConfig cfg = builtin_mcms_generator();
  cfg.mode = DataMode::Likert;
  cfg.n_per_group = {2000};
  cfg.seed = 9;
  cfg.spam_fraction = 0.2;
  const auto sim = simulate_responses(cfg);
  const auto& rows = sim.at("SIM").matrix.rows;
  CHECK((rows.array() >= 1.0).all());
  CHECK((rows.array() <= 7.0).all());
  CHECK((rows.array() == rows.array().round()).all());
}

TEST_CASE("continuous sample covariance matches the implied covariance") {
  GeneratorConfig cfg = builtin_mcms_generator();
  cfg.n_per_group = {200000};
  cfg.seed = 4;
  const auto sim = simulate_responses(cfg);
  const SampleMoments sm = compute_sample_moments(sim.at("SIM").matrix, false);
  const GroupParams& gp = cfg.groups[0];
  Matrix implied = gp.lambda * gp.phi * gp.lambda.transpose();
  implied.diagonal() += gp.theta_diag;
  CHECK((sm.cov - implied).cwiseAbs().maxCoeff() < 0.01);
}

TEST_CASE("sample means obey the CLT bound across seeds") {
  GeneratorConfig cfg = builtin_mcms_generator();
  cfg.n_per_group = {2000};
  const GroupParams& gp = cfg.groups[0];
  Matrix implied = gp.lambda * gp.phi * gp.lambda.transpose();
  implied.diagonal() += gp.theta_diag;
  int violations = 0;
  for (std::uint64_t seed = 1; seed <= 40; ++seed) {
    cfg.seed = seed;
    const auto sim = simulate_responses(cfg);
    const SampleMoments sm = compute_sample_moments(sim.at("SIM").matrix, false);
    for (int i = 0; i < 18; ++i) {
      const double bound = 4.0 * std::sqrt(implied(i, i) / 2000.0);
      if (std::abs(sm.mean[i] - gp.tau[i]) >= bound) ++violations;
    }
  }
  CHECK(violations <= 1);  // 720 checks at ~6e-5 each
}

TEST_CASE("spam injection is recovered by the filter") {
  GeneratorConfig cfg = builtin_mcms_generator();
  cfg.mode = DataMode::Likert;
  cfg.n_per_group = {10000};
  cfg.spam_fraction = 0.35;
  cfg.seed = 77;
  const auto sim = simulate_responses(cfg);
  const auto& group = sim.at("SIM");

  const FilterOutcome out = apply_spam_filter(group.records, cfg.spam_rules);
  CHECK(std::abs(out.summary.spam_rate - 0.35) < 0.015);

  // among true spammers, the filter pass rate matches the analytic bound
  long spammers = 0, passed = 0;
  std::map<std::string, bool> clean_ids;
  for (const auto& rec : out.clean) clean_ids[rec.respondent_id] = true;
  for (size_t i = 0; i < group.records.size(); ++i) {
    if (!group.is_spammer[i]) continue;
    ++spammers;
    if (clean_ids.count(group.records[i].respondent_id)) ++passed;
  }
  const double p = 1.0 / 1029.0;
  const double se = std::sqrt(p * (1 - p) / spammers);
  CHECK(std::abs(static_cast<double>(passed) / spammers - p) <= 3.0 * se);
}

TEST_CASE("scaled-t latents keep the covariance but fatten the tails") {
  GeneratorConfig cfg = builtin_mcms_generator();
  cfg.latent.kind = LatentDistribution::Kind::ScaledT;
  cfg.latent.df = 5;
  cfg.n_per_group = {100000};
  cfg.seed = 21;
  const auto sim = simulate_responses(cfg);
  const SampleMoments sm = compute_sample_moments(sim.at("SIM").matrix, false);
  const GroupParams& gp = cfg.groups[0];
  Matrix implied = gp.lambda * gp.phi * gp.lambda.transpose();
  implied.diagonal() += gp.theta_diag;
  CHECK((sm.cov - implied).cwiseAbs().maxCoeff() < 0.06);

  // marginal kurtosis above the normal value 3
  const auto col = sim.at("SIM").matrix.rows.col(0);
  const double mu = col.mean();
  const double var = (col.array() - mu).square().mean();
  const double kurt = (col.array() - mu).pow(4).mean() / (var * var);
  CHECK(kurt > 3.3);
}

TEST_CASE("plant_noninvariance edits single slots and round-trips") {
  GeneratorConfig cfg = builtin_mcms_generator();
  cfg.group_labels = {"G1", "G2"};
  cfg.groups = {builtin_mcms_parameters(), builtin_mcms_parameters()};
  cfg.n_per_group = {10, 10};

  SUBCASE("single slot edit") {
    const GeneratorConfig edited = plant_noninvariance(cfg, {{"G2", "tau[Am3]", 0.5}});
    CHECK(edited.groups[1].tau[2] == doctest::Approx(cfg.groups[1].tau[2] + 0.5));
    CHECK(edited.groups[0].tau[2] == cfg.groups[0].tau[2]);
    CHECK(edited.groups[1].tau[0] == cfg.groups[1].tau[0]);
    CHECK(edited.groups[1].lambda == cfg.groups[1].lambda);
  }
  SUBCASE("empty edit list is the identity") {
    const GeneratorConfig same = plant_noninvariance(cfg, {});
    CHECK(same.groups[1].tau == cfg.groups[1].tau);
  }
  SUBCASE("edit then reverse edit returns the original") {
    GeneratorConfig forth = plant_noninvariance(cfg, {{"G1", "lambda[Ident2]", 0.3}});
    GeneratorConfig back = plant_noninvariance(forth, {{"G1", "lambda[Ident2]", -0.3}});
    CHECK((back.groups[0].lambda - cfg.groups[0].lambda).norm() < 1e-15);
  }
  SUBCASE("phi edits stay symmetric") {
    const GeneratorConfig edited =
        plant_noninvariance(cfg, {{"G1", "phi[Amotivation,Intrinsic Motivation]", 0.1}});
    CHECK(edited.groups[0].phi(0, 5) == doctest::Approx(cfg.groups[0].phi(0, 5) + 0.1));
    CHECK(edited.groups[0].phi(5, 0) == edited.groups[0].phi(0, 5));
  }
  SUBCASE("unknown slots are rejected") {
    CHECK_THROWS_AS(plant_noninvariance(cfg, {{"G1", "tau[Nope]", 1.0}}), ConfigError);
    CHECK_THROWS_AS(plant_noninvariance(cfg, {{"G9", "tau[Am3]", 1.0}}), ConfigError);
  }
}

TEST_CASE("generator config file round-trips") {
  GeneratorConfig cfg = builtin_mcms_generator();
  cfg.mode = DataMode::Likert;
  cfg.spam_fraction = 0.25;
  cfg.seed = 555;
  const std::string text = generator_to_json(cfg);
  const GeneratorConfig back = generator_from_json(text);
  CHECK(back.seed == 555);
  CHECK(back.mode == DataMode::Likert);
  CHECK(back.spam_fraction == doctest::Approx(0.25));
  CHECK((back.groups[0].lambda - cfg.groups[0].lambda).norm() == 0.0);
  CHECK((back.groups[0].phi - cfg.groups[0].phi).norm() == 0.0);
  CHECK(generator_to_json(back) == text);
}

TEST_CASE("invalid generator configs are rejected") {
  GeneratorConfig cfg = builtin_mcms_generator();
  SUBCASE("non-PD phi") {
    cfg.groups[0].phi(0, 1) = cfg.groups[0].phi(1, 0) = 2.0;
    CHECK_THROWS_AS(simulate_responses(cfg), ConfigError);
  }
  SUBCASE("bad spam fraction") {
    cfg.spam_fraction = 1.0;
    CHECK_THROWS_AS(simulate_responses(cfg), ConfigError);
  }
  SUBCASE("scaled-t needs df>2") {
    cfg.latent.kind = LatentDistribution::Kind::ScaledT;
    cfg.latent.df = 2;
    CHECK_THROWS_AS(simulate_responses(cfg), ConfigError);
  }
}

TEST_CASE("written responses flow through the ingest pipeline unchanged") {
  GeneratorConfig cfg = builtin_mcms_generator();
  cfg.mode = DataMode::Likert;
  cfg.n_per_group = {300};
  cfg.spam_fraction = 0.2;
  cfg.seed = 31;
  const auto sim = simulate_responses(cfg);
  const auto records = all_records(sim, cfg.group_labels);
  std::vector<std::string> test_items;
  for (const auto& [k, v] : cfg.spam_rules.expected_test_answers) test_items.push_back(k);
  const std::string csv = response_csv_text(records, cfg.scale, test_items);

  const ParseResult parsed = parse_responses_text(csv, cfg.scale);
  CHECK(parsed.records.size() == 300);
  CHECK(parsed.rejected.empty());
  const FilterOutcome filtered = apply_spam_filter(parsed.records, cfg.spam_rules);
  // every honest respondent passes, so clean count >= honest count
  long honest = 0;
  for (bool s : sim.at("SIM").is_spammer) honest += s ? 0 : 1;
  CHECK(static_cast<long>(filtered.clean.size()) >= honest);
}
