#include <algorithm>
#include <cmath>

#include "mcms/errors.hpp"
#include "mcms/sem.hpp"

namespace mcms {

namespace {

constexpr double kBarrier = 1e12;

void project(Vector& x, const std::vector<double>& lb) {
  for (int i = 0; i < x.size(); ++i)
    if (x[i] < lb[i]) x[i] = lb[i];
}

double projected_gradient_norm(const Vector& x, const Vector& g,
                               const std::vector<double>& lb) {
  double s = 0.0;
  for (int i = 0; i < x.size(); ++i) {
    const bool at_bound = x[i] <= lb[i] + 1e-12 && g[i] > 0.0;
    if (!at_bound) s += g[i] * g[i];
  }
  return std::sqrt(s);
}

/// Fisher information approximation B = Delta' W Delta assembled groupwise
/// from 0.5 tr(Sigma^-1 dSigma_u Sigma^-1 dSigma_v) plus the mean part
/// dmu_u' Sigma^-1 dmu_v, weighted like the objective.
Matrix fisher_information(const CompiledModel& model,
                          const std::vector<SampleMoments>& moments, const Vector& theta,
                          ChisqMultiplier multiplier) {
  const int nf = model.n_free;
  const int p = model.p();
  Matrix b = Matrix::Zero(nf, nf);
  double total_m = 0.0;
  for (const auto& mom : moments) total_m += multiplier_value(multiplier, mom.n);

  Matrix lambda, phi;
  Vector theta_diag, tau, kappa;
  for (int g = 0; g < model.n_groups(); ++g) {
    const double w = multiplier_value(multiplier, moments[g].n) / total_m;
    model.materialize(g, theta, lambda, phi, theta_diag, tau, kappa);
    Matrix sigma = lambda * phi * lambda.transpose();
    sigma.diagonal() += theta_diag;
    Eigen::LLT<Matrix> llt(sigma);
    if (llt.info() != Eigen::Success)
      throw FitError("implied covariance not positive definite at the solution");
    const Matrix sigma_inv = llt.solve(Matrix::Identity(p, p));

    const detail::GroupDerivatives d = detail::group_derivatives(model, g, theta);
    const size_t na = d.active.size();
    std::vector<Matrix> x(na);
    std::vector<Vector> siv(na);
    for (size_t k = 0; k < na; ++k) {
      x[k] = sigma_inv * d.dsigma[k];
      if (model.mean_structure) siv[k] = sigma_inv * d.dmu[k];
    }
    for (size_t u = 0; u < na; ++u)
      for (size_t v = u; v < na; ++v) {
        double e = 0.5 * (x[u].array() * x[v].transpose().array()).sum();
        if (model.mean_structure) e += d.dmu[u].dot(siv[v]);
        b(d.active[u], d.active[v]) += w * e;
        if (d.active[u] != d.active[v]) b(d.active[v], d.active[u]) += w * e;
      }
  }
  return b;
}

struct OptimState {
  Vector x;
  double f = 0.0;
  Vector grad;
  int iterations = 0;
  bool converged = false;
};

OptimState minimize_bfgs(const CompiledModel& model, const std::vector<SampleMoments>& moments,
                         Vector start, const FitOptions& opt) {
  const int n = model.n_free;
  OptimState st;
  st.x = std::move(start);
  project(st.x, model.lower_bounds);
  st.grad.resize(n);
  st.f = evaluate_objective(model, moments, st.x, opt.multiplier, &st.grad);
  if (st.f >= kBarrier) throw FitError("start values give a non-positive-definite model");
  if (n == 0) {
    st.converged = true;
    return st;
  }

  Matrix h = Matrix::Identity(n, n);
  bool h_scaled = false;
  for (int iter = 0; iter < opt.max_iterations; ++iter) {
    st.iterations = iter + 1;
    Vector dir = -(h * st.grad);
    if (dir.dot(st.grad) > -1e-14 * dir.norm() * st.grad.norm()) {
      h.setIdentity();
      dir = -st.grad;
    }

    // backtracking line search with projection onto the bounds
    double alpha = 1.0;
    Vector x_new;
    double f_new = st.f;
    bool accepted = false;
    for (int ls = 0; ls < 60; ++ls) {
      x_new = st.x + alpha * dir;
      project(x_new, model.lower_bounds);
      const Vector step = x_new - st.x;
      if (step.norm() == 0.0) break;
      f_new = evaluate_objective(model, moments, x_new, opt.multiplier, nullptr);
      if (f_new <= st.f + 1e-4 * st.grad.dot(step)) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) {
      // retry once from a fresh steepest-descent direction
      h.setIdentity();
      dir = -st.grad;
      alpha = 1.0;
      for (int ls = 0; ls < 60; ++ls) {
        x_new = st.x + alpha * dir;
        project(x_new, model.lower_bounds);
        const Vector step = x_new - st.x;
        if (step.norm() == 0.0) break;
        f_new = evaluate_objective(model, moments, x_new, opt.multiplier, nullptr);
        if (f_new <= st.f + 1e-4 * st.grad.dot(step)) {
          accepted = true;
          break;
        }
        alpha *= 0.5;
      }
      if (!accepted) break;  // stalled; polish may still finish the job
    }

    Vector grad_new(n);
    evaluate_objective(model, moments, x_new, opt.multiplier, &grad_new);
    const Vector s = x_new - st.x;
    const Vector y = grad_new - st.grad;
    const double rel_df = std::abs(st.f - f_new) / std::max(1.0, std::abs(f_new));
    st.x = x_new;
    st.f = f_new;
    st.grad = grad_new;

    const double pg = projected_gradient_norm(st.x, st.grad, model.lower_bounds);
    if (rel_df < opt.f_rel_tol && pg < opt.grad_tol) {
      st.converged = true;
      break;
    }

    const double ys = y.dot(s);
    if (ys > 1e-12 * y.norm() * s.norm()) {
      if (!h_scaled) {
        h = Matrix::Identity(n, n) * (ys / y.dot(y));
        h_scaled = true;
      }
      const double rho = 1.0 / ys;
      const Vector hy = h * y;
      h -= rho * (s * hy.transpose() + hy * s.transpose());
      h += rho * rho * (y.dot(hy)) * (s * s.transpose());
      h += rho * (s * s.transpose());
    }
  }
  return st;
}

// Drive the gradient toward machine precision with Fisher-scoring steps so
// that reported optima are reproducible to ~1e-10 regardless of the BFGS path.
void polish(const CompiledModel& model, const std::vector<SampleMoments>& moments,
            const FitOptions& opt, OptimState& st) {
  if (model.n_free == 0) return;
  for (int iter = 0; iter < 30; ++iter) {
    const double pg = projected_gradient_norm(st.x, st.grad, model.lower_bounds);
    if (pg < 1e-10) break;
    Matrix b = 2.0 * fisher_information(model, moments, st.x, opt.multiplier);
    Eigen::LDLT<Matrix> ldlt(b);
    if (ldlt.info() != Eigen::Success) break;
    Vector dir = ldlt.solve(-st.grad);
    if (!dir.allFinite()) break;

    double alpha = 1.0;
    bool accepted = false;
    Vector x_new;
    double f_new = 0.0;
    for (int ls = 0; ls < 40; ++ls) {
      x_new = st.x + alpha * dir;
      project(x_new, model.lower_bounds);
      if ((x_new - st.x).norm() == 0.0) break;
      f_new = evaluate_objective(model, moments, x_new, opt.multiplier, nullptr);
      if (f_new <= st.f) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) break;
    const double rel_df = std::abs(st.f - f_new) / std::max(1.0, std::abs(f_new));
    st.x = x_new;
    st.f = f_new;
    evaluate_objective(model, moments, st.x, opt.multiplier, &st.grad);
    if (rel_df == 0.0 && projected_gradient_norm(st.x, st.grad, model.lower_bounds) >= pg)
      break;
  }
}

}  // namespace

FitResult fit_model(const CompiledModel& model, const std::vector<SampleMoments>& moments,
                    const FitOptions& options, const Vector* start) {
  if (static_cast<int>(moments.size()) != model.n_groups())
    throw ConfigError("fit_model: moments count does not match group count");
  for (int g = 0; g < model.n_groups(); ++g)
    if (moments[g].items != model.items)
      throw ConfigError("fit_model: item order of group " + model.group_labels[g] +
                        " does not match the model");
  if (model.df() < 0)
    throw ConfigError("model is not identified: negative degrees of freedom (" +
                      std::to_string(model.df()) + ")");

  FitResult fit;
  fit.model = std::make_shared<CompiledModel>(model);
  fit.multiplier = options.multiplier;
  fit.df = model.df();
  long total_n = 0;
  for (const auto& mom : moments) {
    fit.group_n.push_back(mom.n);
    total_n += mom.n;
  }
  if (total_n <= model.n_free)
    fit.warnings.push_back("sample size " + std::to_string(total_n) +
                           " does not exceed the number of free parameters " +
                           std::to_string(model.n_free));

  Vector x0 = start ? *start : model.default_start(moments);
  if (start) {
    Vector probe = x0;
    project(probe, model.lower_bounds);
    if (evaluate_objective(model, moments, probe, options.multiplier, nullptr) >= kBarrier)
      x0 = model.default_start(moments);
  }

  OptimState st = minimize_bfgs(model, moments, std::move(x0), options);
  if (st.converged || st.iterations < options.max_iterations)
    polish(model, moments, options, st);

  fit.theta = st.x;
  fit.fmin = st.f;
  fit.n_iterations = st.iterations;
  fit.gradient_norm = projected_gradient_norm(st.x, st.grad, model.lower_bounds);
  fit.converged = fit.gradient_norm < options.grad_tol;
  if (!fit.converged)
    fit.warnings.push_back("optimizer stopped with projected gradient norm " +
                           std::to_string(fit.gradient_norm));

  const double total_m = fit.total_multiplier();
  fit.chisq = total_m * fit.fmin;
  for (int g = 0; g < model.n_groups(); ++g) {
    const ImpliedMoments im = implied_moments(model, g, st.x);
    const FmlValue v = fml(moments[g].cov, moments[g].mean, im.sigma, im.mu);
    fit.group_fmin.push_back(v.f);
  }

  if (model.n_free > 0) {
    const Matrix b = fisher_information(model, moments, st.x, options.multiplier);
    Eigen::SelfAdjointEigenSolver<Matrix> eig(b);
    const double max_ev = eig.eigenvalues().cwiseAbs().maxCoeff();
    if (eig.eigenvalues().minCoeff() < 1e-10 * std::max(1.0, max_ev)) {
      fit.identified = false;
      fit.warnings.push_back("information matrix is rank-deficient at the solution");
    }
  }
  return fit;
}

FitResult fit_model(const FactorModelSpec& spec, const SampleMoments& moments,
                    const FitOptions& options, const Vector* start) {
  const CompiledModel model = compile_single_group(spec);
  FitResult fit = fit_model(model, {moments}, options, start);
  fit.base_spec = std::make_shared<FactorModelSpec>(spec);
  return fit;
}

FitResult fit_baseline(const std::vector<std::string>& items,
                       const std::vector<std::string>& group_labels,
                       const std::vector<SampleMoments>& moments, bool mean_structure,
                       ChisqMultiplier multiplier) {
  FactorModelSpec spec;
  spec.items = items;
  spec.loading_pattern = Grid<Param>(static_cast<int>(items.size()), 0, Param::Fixed(0.0));
  spec.factor_cov_pattern = Grid<Param>(0, 0, Param::Fixed(0.0));
  spec.residual_pattern.assign(items.size(), Param::Free());
  spec.mean_structure = mean_structure;
  if (mean_structure) spec.intercept_pattern.assign(items.size(), Param::Free());

  CompiledModel model;
  if (group_labels.size() == 1) {
    model = compile_single_group(spec, group_labels.front());
  } else {
    MultigroupSpec mg;
    mg.base = spec;
    mg.groups = group_labels;
    model = compile_multigroup(mg);
  }

  // closed form: fitted variances are the observed ones, means the observed means
  Vector theta(model.n_free);
  for (int g = 0; g < model.n_groups(); ++g) {
    for (const auto& s : model.groups[g].theta_free)
      theta[s.theta] = moments[g].cov(s.row, s.row);
    for (const auto& s : model.groups[g].tau_free) theta[s.theta] = moments[g].mean[s.row];
  }

  FitResult fit;
  fit.model = std::make_shared<CompiledModel>(model);
  fit.multiplier = multiplier;
  fit.df = model.df();
  fit.theta = theta;
  fit.converged = true;
  fit.identified = true;
  fit.n_iterations = 0;
  fit.gradient_norm = 0.0;
  for (const auto& mom : moments) fit.group_n.push_back(mom.n);
  fit.fmin = evaluate_objective(model, moments, theta, multiplier, nullptr);
  fit.chisq = fit.total_multiplier() * fit.fmin;
  for (int g = 0; g < model.n_groups(); ++g) {
    const ImpliedMoments im = implied_moments(model, g, theta);
    fit.group_fmin.push_back(fml(moments[g].cov, moments[g].mean, im.sigma, im.mu).f);
  }
  return fit;
}

}  // namespace mcms
