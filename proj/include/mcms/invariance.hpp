#pragma once

#include <map>
#include <string>
#include <vector>

#include "mcms/sem.hpp"

namespace mcms {

enum class DecisionMode { CfiOnly, Conjunctive };

struct Decision {
  bool invariant = true;
  double cfi_drop = 0.0;
  double rmsea_rise = 0.0;
};

/// Non-invariance rule on the change in fit between nested levels.
/// CfiOnly: non-invariant iff CFI drops by more than 0.010; Conjunctive
/// additionally requires an RMSEA rise above 0.015.
Decision invariance_decision(const FitIndices& prev, const FitIndices& cur, DecisionMode mode);
Decision invariance_decision(const FitResult& prev, const FitResult& cur, DecisionMode mode);

struct LadderOptions {
  FitOptions fit;
  bool use_scaled = true;
  DecisionMode mode = DecisionMode::CfiOnly;
  std::string reference_group;  // empty: lexicographically first
  int max_freed = 6;
};

/// Simultaneous fit with per-group free parameters (shared pattern only).
FitResult fit_configural(const FactorModelSpec& base,
                         const std::map<std::string, SampleMoments>& groups,
                         const FitOptions& options = {});

/// Loadings tied across groups, warm-started from the configural solution.
FitResult constrain_metric(const FitResult& configural,
                           const std::map<std::string, SampleMoments>& groups,
                           const FitOptions& options = {});

/// Intercepts tied across groups (minus `freed`), latent means freed outside
/// the reference group.
FitResult constrain_scalar(const FitResult& metric,
                           const std::map<std::string, SampleMoments>& groups,
                           const std::vector<std::string>& freed,
                           const std::string& reference_group = "",
                           const FitOptions& options = {});

struct SearchStep {
  std::string freed_item;
  double chisq_before = 0.0;
  double chisq_after = 0.0;
  double cfi_drop_vs_metric = 0.0;
};

struct PartialScalarResult {
  std::vector<std::string> freed;
  FitResult fit;
  bool passed = false;
  std::vector<SearchStep> trace;
};

/// Greedy release of tied intercepts: each round refits every single-release
/// candidate, frees the one with the largest pooled-statistic improvement,
/// and stops once the decision rule against the metric level passes or the
/// budget is exhausted.
PartialScalarResult partial_scalar_search(const FitResult& metric,
                                          const std::map<std::string, SampleMoments>& groups,
                                          const LadderOptions& options);

struct LatentMeans {
  std::vector<std::string> groups;
  std::vector<std::string> factors;
  Matrix kappa;      // G x q, reference row zero
  Matrix se_robust;  // G x q, zeros for the reference group
  std::string reference_group;
};

/// Model-implied factor means per group from a (partial) scalar fit.
LatentMeans latent_means(const FitResult& scalar_fit,
                         const std::map<std::string, SampleMoments>& groups);

struct LevelEntry {
  std::string name;  // configural | metric | full_scalar | partial_scalar
  FitIndices indices;
  bool has_delta = false;
  double cfi_delta = 0.0;    // drop vs previous level (nonnegative magnitude)
  double rmsea_delta = 0.0;  // rise vs previous level
  bool has_decision = false;
  bool invariant = true;
  int n_free = 0;
  bool converged = false;
};

struct InvarianceReport {
  std::vector<LevelEntry> levels;
  std::vector<std::string> freed_intercepts;
  bool partial_step_taken = false;
  bool scalar_achieved = false;  // full or partial
  LatentMeans means;
  bool has_means = false;
  DecisionMode mode = DecisionMode::CfiOnly;
  std::vector<std::string> notes;
};

/// Run the whole ladder: configural, metric, full scalar, and, when full
/// scalar fails the decision rule, the partial-scalar search; latent means
/// are estimated at the final scalar level.
InvarianceReport run_invariance_ladder(const FactorModelSpec& base,
                                       const std::map<std::string, SampleMoments>& groups,
                                       const LadderOptions& options = {});

}  // namespace mcms
