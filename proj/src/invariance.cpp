#include "mcms/invariance.hpp"

#include <algorithm>
#include <cmath>

#include "mcms/errors.hpp"

namespace mcms {

namespace {

std::vector<std::string> ordered_labels(const std::map<std::string, SampleMoments>& groups) {
  std::vector<std::string> labels;
  for (const auto& [label, mom] : groups) labels.push_back(label);
  return labels;
}

std::vector<SampleMoments> ordered_moments(const std::map<std::string, SampleMoments>& groups) {
  std::vector<SampleMoments> out;
  for (const auto& [label, mom] : groups) out.push_back(mom);
  return out;
}

/// Start values for `to` read off a previous fit: every free slot of the new
/// model takes the fitted value of the same cell, tied slots averaging over
/// groups. Newly freed cells inherit the tied estimate automatically.
Vector transfer_start(const FitResult& from, const CompiledModel& to) {
  const CompiledModel& src = *from.model;
  Vector sum = Vector::Zero(to.n_free);
  Eigen::VectorXi count = Eigen::VectorXi::Zero(to.n_free);
  Matrix lambda, phi;
  Vector theta_diag, tau, kappa;
  for (int g = 0; g < to.n_groups(); ++g) {
    src.materialize(g, from.theta, lambda, phi, theta_diag, tau, kappa);
    const GroupLayout& layout = to.groups[g];
    auto add = [&](int t, double v) {
      sum[t] += v;
      count[t] += 1;
    };
    for (const auto& s : layout.lambda_free) add(s.theta, lambda(s.row, s.col));
    for (const auto& s : layout.phi_free) add(s.theta, phi(s.row, s.col));
    for (const auto& s : layout.theta_free) add(s.theta, theta_diag[s.row]);
    for (const auto& s : layout.tau_free) add(s.theta, tau[s.row]);
    for (const auto& s : layout.kappa_free) add(s.theta, kappa[s.row]);
  }
  Vector start(to.n_free);
  for (int i = 0; i < to.n_free; ++i) start[i] = count[i] > 0 ? sum[i] / count[i] : 0.0;
  return start;
}

std::string resolve_reference(const std::vector<std::string>& labels,
                              const std::string& requested) {
  if (requested.empty()) return *std::min_element(labels.begin(), labels.end());
  if (std::find(labels.begin(), labels.end(), requested) == labels.end())
    throw ConfigError("reference group " + requested + " is not among the groups");
  return requested;
}

}  // namespace

Decision invariance_decision(const FitIndices& prev, const FitIndices& cur,
                             DecisionMode mode) {
  Decision d;
  d.cfi_drop = prev.cfi - cur.cfi;
  d.rmsea_rise = cur.rmsea - prev.rmsea;
  const bool cfi_hit = d.cfi_drop > 0.010;
  const bool rmsea_hit = d.rmsea_rise > 0.015;
  d.invariant = mode == DecisionMode::CfiOnly ? !cfi_hit : !(cfi_hit && rmsea_hit);
  return d;
}

Decision invariance_decision(const FitResult& prev, const FitResult& cur, DecisionMode mode) {
  if (!prev.has_indices || !cur.has_indices)
    throw ConfigError("invariance_decision requires fit indices on both fits");
  return invariance_decision(prev.indices, cur.indices, mode);
}

FitResult fit_configural(const FactorModelSpec& base,
                         const std::map<std::string, SampleMoments>& groups,
                         const FitOptions& options) {
  if (groups.size() < 2)
    throw ConfigError("configural fit requires at least 2 groups, got " +
                      std::to_string(groups.size()));
  MultigroupSpec mg;
  mg.base = base;
  mg.groups = ordered_labels(groups);
  const CompiledModel model = compile_multigroup(mg);
  FitResult fit = fit_model(model, ordered_moments(groups), options);
  fit.base_spec = std::make_shared<FactorModelSpec>(base);
  return fit;
}

FitResult constrain_metric(const FitResult& configural,
                           const std::map<std::string, SampleMoments>& groups,
                           const FitOptions& options) {
  if (!configural.base_spec)
    throw ConfigError("constrain_metric needs a fit produced by fit_configural");
  MultigroupSpec mg;
  mg.base = *configural.base_spec;
  mg.groups = ordered_labels(groups);
  mg.tie_loadings = true;
  const CompiledModel model = compile_multigroup(mg);
  const Vector start = transfer_start(configural, model);
  FitResult fit = fit_model(model, ordered_moments(groups), options, &start);
  fit.base_spec = configural.base_spec;
  return fit;
}

FitResult constrain_scalar(const FitResult& metric,
                           const std::map<std::string, SampleMoments>& groups,
                           const std::vector<std::string>& freed,
                           const std::string& reference_group, const FitOptions& options) {
  if (!metric.base_spec)
    throw ConfigError("constrain_scalar needs a fit produced by the invariance ladder");
  const FactorModelSpec& base = *metric.base_spec;
  if (!base.mean_structure)
    throw ConfigError("scalar invariance requires a mean structure");

  MultigroupSpec mg;
  mg.base = base;
  mg.groups = ordered_labels(groups);
  mg.tie_loadings = true;
  mg.tie_intercepts = true;
  mg.freed_intercepts = freed;
  mg.reference_group = resolve_reference(mg.groups, reference_group);
  mg.free_latent_means = true;
  const CompiledModel model = compile_multigroup(mg);
  const Vector start = transfer_start(metric, model);
  FitResult fit = fit_model(model, ordered_moments(groups), options, &start);
  fit.base_spec = metric.base_spec;

  // identification: each factor should keep at least 2 tied intercepts
  for (int f = 0; f < base.q(); ++f) {
    int tied = 0;
    for (int i = 0; i < base.p(); ++i) {
      if (!base.loading_pattern.at(i, f).free && base.loading_pattern.at(i, f).value == 0.0)
        continue;
      if (std::find(freed.begin(), freed.end(), base.items[i]) == freed.end()) ++tied;
    }
    if (tied < 2)
      fit.warnings.push_back("factor " + base.factors[f] +
                             " keeps fewer than 2 tied intercepts; latent means weakly identified");
  }
  return fit;
}

PartialScalarResult partial_scalar_search(const FitResult& metric,
                                          const std::map<std::string, SampleMoments>& groups,
                                          const LadderOptions& options) {
  const std::vector<SampleMoments> moments = ordered_moments(groups);
  FitResult metric_with_idx = metric;
  apply_fit_indices(metric_with_idx, moments, options.use_scaled);

  // caller judged full scalar non-invariant; each round frees one intercept,
  // then the decision against the metric level is re-checked
  PartialScalarResult result;
  result.fit = constrain_scalar(metric, groups, {}, options.reference_group, options.fit);
  apply_fit_indices(result.fit, moments, options.use_scaled);

  const std::vector<std::string>& items = metric.base_spec->items;
  while (static_cast<int>(result.freed.size()) < options.max_freed) {
    std::string best_item;
    FitResult best_fit;
    double best_chisq = std::numeric_limits<double>::infinity();
    for (const auto& item : items) {
      if (std::find(result.freed.begin(), result.freed.end(), item) != result.freed.end())
        continue;
      std::vector<std::string> cand = result.freed;
      cand.push_back(item);
      FitResult f = constrain_scalar(metric, groups, cand, options.reference_group, options.fit);
      if (f.chisq < best_chisq ||
          (f.chisq == best_chisq && item < best_item)) {
        best_chisq = f.chisq;
        best_item = item;
        best_fit = std::move(f);
      }
    }
    SearchStep step;
    step.freed_item = best_item;
    step.chisq_before = result.fit.chisq;
    step.chisq_after = best_chisq;
    result.freed.push_back(best_item);
    result.fit = std::move(best_fit);
    apply_fit_indices(result.fit, moments, options.use_scaled);
    const Decision d =
        invariance_decision(metric_with_idx.indices, result.fit.indices, options.mode);
    step.cfi_drop_vs_metric = d.cfi_drop;
    result.trace.push_back(step);
    if (d.invariant) {
      result.passed = true;
      break;
    }
  }
  return result;
}

LatentMeans latent_means(const FitResult& scalar_fit,
                         const std::map<std::string, SampleMoments>& groups) {
  const CompiledModel& model = *scalar_fit.model;
  bool any_free_kappa = false;
  for (const auto& g : model.groups) any_free_kappa = any_free_kappa || !g.kappa_free.empty();
  if (!any_free_kappa)
    throw ConfigError("latent means require a scalar-level fit with free factor means");

  const SeResult se = robust_se(scalar_fit, ordered_moments(groups));

  LatentMeans out;
  out.groups = model.group_labels;
  out.factors = model.factors;
  const int G = model.n_groups();
  const int q = model.q();
  out.kappa = Matrix::Zero(G, q);
  out.se_robust = Matrix::Zero(G, q);
  for (int g = 0; g < G; ++g) {
    if (model.groups[g].kappa_free.empty()) out.reference_group = model.group_labels[g];
    for (const auto& s : model.groups[g].kappa_free) {
      out.kappa(g, s.row) = scalar_fit.theta[s.theta];
      out.se_robust(g, s.row) = se.robust[s.theta];
    }
  }
  return out;
}

InvarianceReport run_invariance_ladder(const FactorModelSpec& base,
                                       const std::map<std::string, SampleMoments>& groups,
                                       const LadderOptions& options) {
  const std::vector<SampleMoments> moments = ordered_moments(groups);
  InvarianceReport report;
  report.mode = options.mode;

  auto level_entry = [&](const std::string& name, FitResult& fit,
                         const FitIndices* prev) -> LevelEntry {
    apply_fit_indices(fit, moments, options.use_scaled);
    LevelEntry e;
    e.name = name;
    e.indices = fit.indices;
    e.n_free = fit.model->n_free;
    e.converged = fit.converged;
    if (prev) {
      const Decision d = invariance_decision(*prev, fit.indices, options.mode);
      e.has_delta = true;
      e.cfi_delta = d.cfi_drop;
      e.rmsea_delta = d.rmsea_rise;
      e.has_decision = true;
      e.invariant = d.invariant;
    }
    if (!fit.converged)
      report.notes.push_back(name + " fit did not reach the convergence tolerance");
    return e;
  };

  FitResult configural = fit_configural(base, groups, options.fit);
  report.levels.push_back(level_entry("configural", configural, nullptr));

  FitResult metric = constrain_metric(configural, groups, options.fit);
  report.levels.push_back(level_entry("metric", metric, &report.levels[0].indices));
  const FitIndices metric_idx = report.levels.back().indices;

  FitResult full_scalar =
      constrain_scalar(metric, groups, {}, options.reference_group, options.fit);
  report.levels.push_back(level_entry("full_scalar", full_scalar, &metric_idx));
  const bool full_ok = report.levels.back().invariant;

  FitResult final_scalar = std::move(full_scalar);
  if (!full_ok) {
    report.partial_step_taken = true;
    PartialScalarResult partial = partial_scalar_search(metric, groups, options);
    report.freed_intercepts = partial.freed;
    LevelEntry e;
    e.name = "partial_scalar";
    e.indices = partial.fit.indices;
    e.n_free = partial.fit.model->n_free;
    e.converged = partial.fit.converged;
    const Decision d = invariance_decision(metric_idx, partial.fit.indices, options.mode);
    e.has_delta = true;
    e.cfi_delta = d.cfi_drop;
    e.rmsea_delta = d.rmsea_rise;
    e.has_decision = true;
    e.invariant = d.invariant;
    report.levels.push_back(e);
    report.scalar_achieved = partial.passed;
    final_scalar = std::move(partial.fit);
  } else {
    report.scalar_achieved = true;
  }

  if (report.scalar_achieved) {
    report.means = latent_means(final_scalar, groups);
    report.has_means = true;
  }
  return report;
}

}  // namespace mcms
