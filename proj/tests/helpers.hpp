#pragma once

// Shared fixtures for the test suites: parameter-to-theta mapping, quick
// simulated moments, and factor-column alignment for rotated solutions.

#include <map>
#include <string>
#include <vector>

#include "mcms/ingest.hpp"
#include "mcms/scale.hpp"
#include "mcms/sem.hpp"
#include "mcms/simulate.hpp"

namespace mcms::testing {

/// Fill a compiled model's free-parameter vector from explicit group
/// parameter values (single-group models).
inline Vector theta_from_params(const CompiledModel& model, const GroupParams& gp) {
  Vector theta = Vector::Zero(model.n_free);
  const GroupLayout& layout = model.groups[0];
  for (const auto& s : layout.lambda_free) theta[s.theta] = gp.lambda(s.row, s.col);
  for (const auto& s : layout.phi_free) theta[s.theta] = gp.phi(s.row, s.col);
  for (const auto& s : layout.theta_free) theta[s.theta] = gp.theta_diag[s.row];
  for (const auto& s : layout.tau_free) theta[s.theta] = gp.tau[s.row];
  for (const auto& s : layout.kappa_free) theta[s.theta] = gp.kappa[s.row];
  return theta;
}

/// Simulate one group from the built-in generator parameters and return its
/// sample moments.
inline SampleMoments simulated_moments(long n, std::uint64_t seed, bool with_gamma,
                                       DataMode mode = DataMode::Continuous) {
  GeneratorConfig cfg = builtin_mcms_generator();
  cfg.n_per_group = {n};
  cfg.seed = seed;
  cfg.mode = mode;
  const auto sim = simulate_responses(cfg);
  return compute_sample_moments(sim.at("SIM").matrix, with_gamma);
}

/// One-to-one assignment of rotated columns to generating factors by mean
/// absolute loading of each factor's items; returns col_of_factor and signs.
inline void align_columns(const Matrix& loadings,
                          const std::vector<std::vector<int>>& factor_rows,
                          std::vector<int>& col_of_factor, std::vector<double>& sign) {
  const int q = static_cast<int>(loadings.cols());
  Matrix score = Matrix::Zero(q, q);
  for (int f = 0; f < q; ++f) {
    for (int r : factor_rows[f]) score.row(f) += loadings.row(r).cwiseAbs();
    score.row(f) /= static_cast<double>(factor_rows[f].size());
  }
  col_of_factor.assign(q, -1);
  sign.assign(q, 1.0);
  std::vector<bool> fdone(q, false), cdone(q, false);
  for (int step = 0; step < q; ++step) {
    int bf = -1, bc = -1;
    double best = -1.0;
    for (int f = 0; f < q; ++f) {
      if (fdone[f]) continue;
      for (int c = 0; c < q; ++c) {
        if (cdone[c]) continue;
        if (score(f, c) > best) {
          best = score(f, c);
          bf = f;
          bc = c;
        }
      }
    }
    col_of_factor[bf] = bc;
    fdone[bf] = true;
    cdone[bc] = true;
    double s = 0.0;
    for (int r : factor_rows[bf]) s += loadings(r, bc);
    sign[bf] = s < 0.0 ? -1.0 : 1.0;
  }
}

}  // namespace mcms::testing
