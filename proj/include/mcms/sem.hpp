#pragma once

#include <limits>
#include <memory>
#include <string>
#include <vector>

#include "mcms/ingest.hpp"
#include "mcms/linalg.hpp"
#include "mcms/model_spec.hpp"

namespace mcms {

enum class MatrixId { Lambda, Phi, Theta, Tau, Kappa };

/// Sample-size multiplier convention for the test statistic T = m * F.
enum class ChisqMultiplier { NMinus1, N };

inline double multiplier_value(ChisqMultiplier m, long n) {
  return m == ChisqMultiplier::NMinus1 ? static_cast<double>(n - 1) : static_cast<double>(n);
}

/// Free-slot bookkeeping: a (group, matrix, position) cell bound to an index
/// into the free parameter vector. Ties are shared indices.
struct SlotBinding {
  int row = 0, col = 0;  // col is 0 for vector slots
  int theta = -1;        // index into the free parameter vector
};

struct GroupLayout {
  Matrix lambda_fixed;  // fixed parts (free slots zeroed)
  Matrix phi_fixed;
  Vector theta_fixed;
  Vector tau_fixed;    // empty when no mean structure
  Vector kappa_fixed;  // empty when no mean structure
  std::vector<SlotBinding> lambda_free;
  std::vector<SlotBinding> phi_free;  // lower triangle, row >= col
  std::vector<SlotBinding> theta_free;
  std::vector<SlotBinding> tau_free;
  std::vector<SlotBinding> kappa_free;
};

/// A fully indexed (possibly multigroup) model ready for estimation.
struct CompiledModel {
  std::vector<std::string> items;
  std::vector<std::string> factors;
  std::vector<std::string> group_labels;
  bool mean_structure = false;
  std::vector<GroupLayout> groups;
  int n_free = 0;
  std::vector<std::string> theta_labels;
  std::vector<double> lower_bounds;  // per free parameter; -inf when unbounded

  int p() const { return static_cast<int>(items.size()); }
  int q() const { return static_cast<int>(factors.size()); }
  int n_groups() const { return static_cast<int>(groups.size()); }
  int moment_count() const;
  int df() const { return moment_count() - n_free; }
  int theta_index(const std::string& label) const;  // -1 if absent

  void materialize(int g, const Vector& theta, Matrix& lambda, Matrix& phi, Vector& theta_diag,
                   Vector& tau, Vector& kappa) const;
  /// Start values: loadings 0.7, factor variances 1, covariances 0, residuals
  /// half the observed item variance, intercepts the observed means, factor
  /// means 0; tied slots average their per-group defaults.
  Vector default_start(const std::vector<SampleMoments>& moments) const;
};

/// Single-group compilation; free-parameter order is loadings (column-major),
/// factor covariances (lower triangle), residuals, intercepts, factor means.
CompiledModel compile_single_group(const FactorModelSpec& spec,
                                   const std::string& group_label = "ALL");

/// Multigroup layout: same pattern in every group, with cross-group equality
/// ties on loadings and/or intercepts (optionally exempting some intercepts),
/// and factor means freed everywhere except the reference group.
struct MultigroupSpec {
  FactorModelSpec base;
  std::vector<std::string> groups;
  bool tie_loadings = false;
  bool tie_intercepts = false;
  std::vector<std::string> freed_intercepts;  // exempt from intercept ties
  std::string reference_group;                // default: lexicographically first
  bool free_latent_means = false;
  std::vector<std::string> equality_sets;  // extra tied slots by base label
};

CompiledModel compile_multigroup(const MultigroupSpec& mg);

struct ImpliedMoments {
  Matrix sigma;
  Vector mu;  // empty when no mean structure
};

/// Model-implied covariance matrix and mean vector at a parameter value.
ImpliedMoments implied_moments(const FactorModelSpec& spec, const Vector& theta);
ImpliedMoments implied_moments(const CompiledModel& model, int group, const Vector& theta);

/// Normal-theory ML discrepancy; `proper` is false when sigma is not positive
/// definite, in which case `f` is a large finite barrier value.
struct FmlValue {
  double f = 0.0;
  bool proper = true;
};
FmlValue fml(const Matrix& s, const Vector& mbar, const Matrix& sigma, const Vector& mu);

struct FitOptions {
  ChisqMultiplier multiplier = ChisqMultiplier::NMinus1;
  int max_iterations = 10000;
  double f_rel_tol = 1e-10;
  double grad_tol = 1e-6;
};

struct FitIndices {
  double chisq = 0.0;
  int df = 0;
  double chisq_sb = std::numeric_limits<double>::quiet_NaN();
  double sb_scale = std::numeric_limits<double>::quiet_NaN();
  double cfi = 0.0, tli = 0.0;
  double rmsea = 0.0, rmsea_lo = 0.0, rmsea_hi = 0.0;
  double srmr = 0.0;
  double baseline_chisq = 0.0;
  int baseline_df = 0;
  bool scaled = false;
};

struct FitResult {
  std::shared_ptr<const CompiledModel> model;
  std::shared_ptr<const FactorModelSpec> base_spec;  // set by spec-level entry points
  Vector theta;
  double fmin = 0.0;
  double chisq = 0.0;
  int df = 0;
  std::vector<long> group_n;
  std::vector<double> group_fmin;
  ChisqMultiplier multiplier = ChisqMultiplier::NMinus1;
  double sb_scale = std::numeric_limits<double>::quiet_NaN();
  double chisq_sb = std::numeric_limits<double>::quiet_NaN();
  Vector se_normal;  // empty until robust_se() is run
  Vector se_robust;
  FitIndices indices;
  bool has_indices = false;
  bool converged = false;
  bool identified = true;
  int n_iterations = 0;
  double gradient_norm = std::numeric_limits<double>::infinity();
  std::vector<std::string> warnings;

  double total_multiplier() const;
  double theta_by_label(const std::string& label) const;
  /// Estimated factor correlation, standardized from the covariance estimate.
  double factor_correlation(int group, int f1, int f2) const;
};

/// Minimize the pooled ML discrepancy over the free parameters (quasi-Newton
/// with analytic gradient, then Fisher-scoring polish). `start` overrides the
/// default start values.
FitResult fit_model(const CompiledModel& model, const std::vector<SampleMoments>& moments,
                    const FitOptions& options = {}, const Vector* start = nullptr);
FitResult fit_model(const FactorModelSpec& spec, const SampleMoments& moments,
                    const FitOptions& options = {}, const Vector* start = nullptr);

/// Pooled discrepancy and gradient at an arbitrary parameter value (exposed
/// for gradient verification).
double evaluate_objective(const CompiledModel& model, const std::vector<SampleMoments>& moments,
                          const Vector& theta, ChisqMultiplier multiplier,
                          Vector* gradient = nullptr);

/// Independence baseline (free variances, free means): closed-form fit.
FitResult fit_baseline(const std::vector<std::string>& items,
                       const std::vector<std::string>& group_labels,
                       const std::vector<SampleMoments>& moments, bool mean_structure,
                       ChisqMultiplier multiplier);

struct SbResult {
  double scale = 1.0;
  double chisq_sb = 0.0;
};

/// Mean-and-kurtosis correction of the test statistic: scale factor
/// tr(U Gamma)/df evaluated blockwise per group. Requires fourth-moment
/// matrices in `moments`.
SbResult satorra_bentler(const FitResult& fit, const std::vector<SampleMoments>& moments);
SbResult satorra_bentler(const FitResult& fit, const SampleMoments& moments);
/// Convenience: computes and stores the scale inside `fit`.
void apply_satorra_bentler(FitResult& fit, const std::vector<SampleMoments>& moments);

struct SeResult {
  Vector normal;
  Vector robust;
};

/// Fit-index battery from the fitted model and an internally fitted
/// independence baseline. With `use_scaled`, the corrected statistic replaces
/// the raw one in CFI, TLI and RMSEA (fourth-moment matrices required).
FitIndices fit_indices(const FitResult& fit, const std::vector<SampleMoments>& moments,
                       bool use_scaled = true);
FitIndices fit_indices(const FitResult& fit, const SampleMoments& moments,
                       bool use_scaled = true);
void apply_fit_indices(FitResult& fit, const std::vector<SampleMoments>& moments,
                       bool use_scaled = true);

/// CFI, TLI, RMSEA and its interval from raw statistics alone (no SRMR).
FitIndices indices_from_stats(double t, int df, double t_baseline, int df_baseline,
                              double m_total, int n_groups = 1);

/// sqrt(G * max(T - df, 0) / (df * m)) with m the summed sample-size
/// multiplier; the G factor keeps multigroup values on the single-group scale.
double rmsea_from_stat(double t, int df, double m_total, int n_groups = 1);

/// 90% interval by inverting the noncentral chi-squared CDF at 0.95 / 0.05.
std::pair<double, double> rmsea_ci90(double t, int df, double m_total, int n_groups = 1);

namespace detail {

/// Analytic derivatives of one group's implied moments with respect to every
/// free parameter that touches the group.
struct GroupDerivatives {
  std::vector<int> active;     // theta indices
  std::vector<Matrix> dsigma;  // dSigma/dtheta per active index
  std::vector<Vector> dmu;     // dmu/dtheta per active index (sized when mean structure)
};

GroupDerivatives group_derivatives(const CompiledModel& model, int group, const Vector& theta);

}  // namespace detail

/// Sandwich standard errors plus normal-theory ones from the inverse
/// information. Requires fourth-moment matrices.
SeResult robust_se(const FitResult& fit, const std::vector<SampleMoments>& moments);
SeResult robust_se(const FitResult& fit, const SampleMoments& moments);
void apply_robust_se(FitResult& fit, const std::vector<SampleMoments>& moments);

}  // namespace mcms
