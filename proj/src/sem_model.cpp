#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <tuple>

#include "mcms/errors.hpp"
#include "mcms/sem.hpp"

namespace mcms {

namespace {

constexpr double kVarianceFloor = 1e-6;
constexpr double kBarrier = 1e12;

std::string slot_label(MatrixId mat, const std::vector<std::string>& items,
                       const std::vector<std::string>& factors, int row, int col) {
  switch (mat) {
    case MatrixId::Lambda: return "lambda[" + items[row] + "," + factors[col] + "]";
    case MatrixId::Phi: return "phi[" + factors[row] + "," + factors[col] + "]";
    case MatrixId::Theta: return "theta[" + items[row] + "]";
    case MatrixId::Tau: return "tau[" + items[row] + "]";
    case MatrixId::Kappa: return "kappa[" + factors[row] + "]";
  }
  return {};
}

struct ModelBuilder {
  CompiledModel model;
  // tie key: (group or -1 for shared, matrix, row, col) -> theta index
  std::map<std::tuple<int, int, int, int>, int> index_of;

  int bind(int group_key, MatrixId mat, int row, int col, double lower_bound) {
    const auto key = std::make_tuple(group_key, static_cast<int>(mat), row, col);
    auto it = index_of.find(key);
    if (it != index_of.end()) return it->second;
    const int idx = model.n_free++;
    index_of.emplace(key, idx);
    std::string label = slot_label(mat, model.items, model.factors, row, col);
    if (group_key >= 0 && model.group_labels.size() > 1)
      label += "@" + model.group_labels[group_key];
    model.theta_labels.push_back(std::move(label));
    model.lower_bounds.push_back(lower_bound);
    return idx;
  }
};

void build_group(ModelBuilder& b, const FactorModelSpec& spec, int g, bool tie_loadings,
                 bool tie_intercepts, const std::set<std::string>& freed_intercepts,
                 const std::set<std::string>& extra_ties, bool free_latent_means,
                 bool is_reference) {
  const int p = spec.p();
  const int q = spec.q();
  const double neg_inf = -std::numeric_limits<double>::infinity();
  GroupLayout layout;
  layout.lambda_fixed = Matrix::Zero(p, q);
  layout.phi_fixed = Matrix::Zero(q, q);
  layout.theta_fixed = Vector::Zero(p);
  if (spec.mean_structure) {
    layout.tau_fixed = Vector::Zero(p);
    layout.kappa_fixed = Vector::Zero(q);
  }

  auto tied = [&](MatrixId mat, int row, int col) {
    return extra_ties.count(slot_label(mat, b.model.items, b.model.factors, row, col)) > 0;
  };

  for (int j = 0; j < q; ++j)
    for (int i = 0; i < p; ++i) {
      const Param& e = spec.loading_pattern.at(i, j);
      if (e.free) {
        const bool share = tie_loadings || tied(MatrixId::Lambda, i, j);
        const int t = b.bind(share ? -1 : g, MatrixId::Lambda, i, j, neg_inf);
        layout.lambda_free.push_back({i, j, t});
      } else {
        layout.lambda_fixed(i, j) = e.value;
      }
    }

  for (int col = 0; col < q; ++col)
    for (int row = col; row < q; ++row) {
      const Param& e = spec.factor_cov_pattern.at(row, col);
      if (e.free) {
        const bool share = tied(MatrixId::Phi, row, col);
        const double lb = row == col ? kVarianceFloor : neg_inf;
        const int t = b.bind(share ? -1 : g, MatrixId::Phi, row, col, lb);
        layout.phi_free.push_back({row, col, t});
      } else {
        layout.phi_fixed(row, col) = e.value;
        layout.phi_fixed(col, row) = e.value;
      }
    }

  for (int i = 0; i < p; ++i) {
    const Param& e = spec.residual_pattern[i];
    if (e.free) {
      const bool share = tied(MatrixId::Theta, i, 0);
      const int t = b.bind(share ? -1 : g, MatrixId::Theta, i, 0, kVarianceFloor);
      layout.theta_free.push_back({i, 0, t});
    } else {
      layout.theta_fixed[i] = e.value;
    }
  }

  if (spec.mean_structure) {
    for (int i = 0; i < p; ++i) {
      const Param& e = spec.intercept_pattern[i];
      if (e.free) {
        const bool share = (tie_intercepts && !freed_intercepts.count(b.model.items[i])) ||
                           tied(MatrixId::Tau, i, 0);
        const int t = b.bind(share ? -1 : g, MatrixId::Tau, i, 0, neg_inf);
        layout.tau_free.push_back({i, 0, t});
      } else {
        layout.tau_fixed[i] = e.value;
      }
    }
    for (int j = 0; j < q; ++j) {
      bool free_kappa;
      double fixed_value = 0.0;
      if (free_latent_means) {
        free_kappa = !is_reference;
      } else {
        const Param& e = spec.factor_mean_pattern[j];
        free_kappa = e.free;
        fixed_value = e.value;
      }
      if (free_kappa) {
        const int t = b.bind(g, MatrixId::Kappa, j, 0, neg_inf);
        layout.kappa_free.push_back({j, 0, t});
      } else {
        layout.kappa_fixed[j] = fixed_value;
      }
    }
  }

  b.model.groups.push_back(std::move(layout));
}

}  // namespace

CompiledModel compile_single_group(const FactorModelSpec& spec, const std::string& group_label) {
  const auto violations = validate_model_spec(spec);
  if (!violations.empty()) throw ConfigError("invalid model spec: " + violations.front());

  ModelBuilder b;
  b.model.items = spec.items;
  b.model.factors = spec.factors;
  b.model.group_labels = {group_label};
  b.model.mean_structure = spec.mean_structure;
  build_group(b, spec, 0, false, false, {}, {}, false, true);
  return std::move(b.model);
}

CompiledModel compile_multigroup(const MultigroupSpec& mg) {
  const auto violations = validate_model_spec(mg.base);
  if (!violations.empty()) throw ConfigError("invalid model spec: " + violations.front());
  if (mg.groups.size() < 2)
    throw ConfigError("multigroup model requires at least 2 groups, got " +
                      std::to_string(mg.groups.size()));
  if (mg.free_latent_means && !mg.base.mean_structure)
    throw ConfigError("latent means require a mean structure");

  std::string reference = mg.reference_group;
  if (reference.empty()) reference = *std::min_element(mg.groups.begin(), mg.groups.end());
  if (std::find(mg.groups.begin(), mg.groups.end(), reference) == mg.groups.end())
    throw ConfigError("reference group " + reference + " is not among the groups");

  std::set<std::string> freed(mg.freed_intercepts.begin(), mg.freed_intercepts.end());
  for (const auto& item : freed)
    if (std::find(mg.base.items.begin(), mg.base.items.end(), item) == mg.base.items.end())
      throw ConfigError("freed intercept " + item + " is not an item of the model");
  std::set<std::string> extra(mg.equality_sets.begin(), mg.equality_sets.end());

  ModelBuilder b;
  b.model.items = mg.base.items;
  b.model.factors = mg.base.factors;
  b.model.group_labels = mg.groups;
  b.model.mean_structure = mg.base.mean_structure;
  for (size_t g = 0; g < mg.groups.size(); ++g)
    build_group(b, mg.base, static_cast<int>(g), mg.tie_loadings, mg.tie_intercepts, freed,
                extra, mg.free_latent_means, mg.groups[g] == reference);
  return std::move(b.model);
}

int CompiledModel::moment_count() const {
  const int per_group = vech_size(p()) + (mean_structure ? p() : 0);
  return per_group * n_groups();
}

int CompiledModel::theta_index(const std::string& label) const {
  for (size_t i = 0; i < theta_labels.size(); ++i)
    if (theta_labels[i] == label) return static_cast<int>(i);
  return -1;
}

void CompiledModel::materialize(int g, const Vector& theta, Matrix& lambda, Matrix& phi,
                                Vector& theta_diag, Vector& tau, Vector& kappa) const {
  const GroupLayout& layout = groups[g];
  lambda = layout.lambda_fixed;
  phi = layout.phi_fixed;
  theta_diag = layout.theta_fixed;
  tau = layout.tau_fixed;
  kappa = layout.kappa_fixed;
  for (const auto& s : layout.lambda_free) lambda(s.row, s.col) = theta[s.theta];
  for (const auto& s : layout.phi_free) {
    phi(s.row, s.col) = theta[s.theta];
    phi(s.col, s.row) = theta[s.theta];
  }
  for (const auto& s : layout.theta_free) theta_diag[s.row] = theta[s.theta];
  for (const auto& s : layout.tau_free) tau[s.row] = theta[s.theta];
  for (const auto& s : layout.kappa_free) kappa[s.row] = theta[s.theta];
}

Vector CompiledModel::default_start(const std::vector<SampleMoments>& moments) const {
  Vector sum = Vector::Zero(n_free);
  Eigen::VectorXi count = Eigen::VectorXi::Zero(n_free);
  for (int g = 0; g < n_groups(); ++g) {
    const GroupLayout& layout = groups[g];
    auto add = [&](int t, double v) {
      sum[t] += v;
      count[t] += 1;
    };
    for (const auto& s : layout.lambda_free) add(s.theta, 0.7);
    for (const auto& s : layout.phi_free) add(s.theta, s.row == s.col ? 1.0 : 0.0);
    for (const auto& s : layout.theta_free)
      add(s.theta, 0.5 * moments[g].cov(s.row, s.row));
    for (const auto& s : layout.tau_free) add(s.theta, moments[g].mean[s.row]);
    for (const auto& s : layout.kappa_free) add(s.theta, 0.0);
  }
  Vector start(n_free);
  for (int i = 0; i < n_free; ++i) start[i] = count[i] > 0 ? sum[i] / count[i] : 0.0;
  return start;
}

ImpliedMoments implied_moments(const CompiledModel& model, int group, const Vector& theta) {
  Matrix lambda, phi;
  Vector theta_diag, tau, kappa;
  model.materialize(group, theta, lambda, phi, theta_diag, tau, kappa);
  ImpliedMoments out;
  out.sigma = lambda * phi * lambda.transpose();
  out.sigma.diagonal() += theta_diag;
  if (model.mean_structure) out.mu = tau + lambda * kappa;
  return out;
}

ImpliedMoments implied_moments(const FactorModelSpec& spec, const Vector& theta) {
  const CompiledModel model = compile_single_group(spec);
  if (theta.size() != model.n_free)
    throw ConfigError("theta has " + std::to_string(theta.size()) + " entries, model needs " +
                      std::to_string(model.n_free));
  return implied_moments(model, 0, theta);
}

FmlValue fml(const Matrix& s, const Vector& mbar, const Matrix& sigma, const Vector& mu) {
  const int p = static_cast<int>(s.rows());
  Eigen::LLT<Matrix> sigma_llt(sigma);
  if (sigma_llt.info() != Eigen::Success) return {kBarrier, false};
  double logdet_sigma =
      2.0 * sigma_llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
  if (!std::isfinite(logdet_sigma)) return {kBarrier, false};

  double logdet_s;
  if (!logdet_spd(s, logdet_s)) throw FitError("sample covariance matrix is not positive definite");

  const Matrix sigma_inv_s = sigma_llt.solve(s);
  double f = logdet_sigma - logdet_s + sigma_inv_s.trace() - p;
  if (mu.size() > 0) {
    const Vector d = mbar - mu;
    f += d.dot(sigma_llt.solve(d));
  }
  // small negative values are round-off at the perfect-fit boundary
  if (f < 0.0 && f > -1e-10) f = 0.0;
  return {f, true};
}

double evaluate_objective(const CompiledModel& model, const std::vector<SampleMoments>& moments,
                          const Vector& theta, ChisqMultiplier multiplier, Vector* gradient) {
  const int G = model.n_groups();
  if (static_cast<int>(moments.size()) != G)
    throw ConfigError("model has " + std::to_string(G) + " groups but " +
                      std::to_string(moments.size()) + " moment sets were given");

  double total_m = 0.0;
  for (const auto& mom : moments) total_m += multiplier_value(multiplier, mom.n);

  if (gradient) gradient->setZero(model.n_free);
  double f_total = 0.0;
  Matrix lambda, phi;
  Vector theta_diag, tau, kappa;
  for (int g = 0; g < G; ++g) {
    const SampleMoments& mom = moments[g];
    const double w = multiplier_value(multiplier, mom.n) / total_m;
    model.materialize(g, theta, lambda, phi, theta_diag, tau, kappa);

    Matrix sigma = lambda * phi * lambda.transpose();
    sigma.diagonal() += theta_diag;
    Eigen::LLT<Matrix> llt(sigma);
    const int p = model.p();
    if (llt.info() != Eigen::Success) {
      if (gradient) gradient->setZero();
      return kBarrier;
    }
    const double logdet_sigma =
        2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    if (!std::isfinite(logdet_sigma)) {
      if (gradient) gradient->setZero();
      return kBarrier;
    }
    double logdet_s;
    if (!logdet_spd(mom.cov, logdet_s))
      throw FitError("covariance matrix of group " + model.group_labels[g] +
                     " is not positive definite");

    const Matrix sigma_inv = llt.solve(Matrix::Identity(p, p));
    double fg = logdet_sigma - logdet_s + (sigma_inv * mom.cov).trace() - p;
    Vector d, sid;
    if (model.mean_structure) {
      d = mom.mean - (tau + lambda * kappa);
      sid = sigma_inv * d;
      fg += d.dot(sid);
    }
    if (fg < 0.0 && fg > -1e-10) fg = 0.0;
    f_total += w * fg;

    if (gradient) {
      Matrix resid = sigma - mom.cov;
      if (model.mean_structure) resid.noalias() -= d * d.transpose();
      const Matrix grad_sigma = sigma_inv * resid * sigma_inv;  // dF/dSigma
      const Matrix glp = grad_sigma * lambda * phi;
      const Matrix m = lambda.transpose() * grad_sigma * lambda;
      Vector h;
      if (model.mean_structure) h = -2.0 * sid;

      const GroupLayout& layout = model.groups[g];
      Vector& grad = *gradient;
      for (const auto& s : layout.lambda_free) {
        double v = 2.0 * glp(s.row, s.col);
        if (model.mean_structure) v += h[s.row] * kappa[s.col];
        grad[s.theta] += w * v;
      }
      for (const auto& s : layout.phi_free)
        grad[s.theta] += w * (s.row == s.col ? m(s.row, s.row) : m(s.row, s.col) + m(s.col, s.row));
      for (const auto& s : layout.theta_free) grad[s.theta] += w * grad_sigma(s.row, s.row);
      for (const auto& s : layout.tau_free) grad[s.theta] += w * h[s.row];
      for (const auto& s : layout.kappa_free)
        grad[s.theta] += w * lambda.col(s.row).dot(h);
    }
  }
  return f_total;
}

namespace detail {

GroupDerivatives group_derivatives(const CompiledModel& model, int group, const Vector& theta) {
  const int p = model.p();
  Matrix lambda, phi;
  Vector theta_diag, tau, kappa;
  model.materialize(group, theta, lambda, phi, theta_diag, tau, kappa);

  GroupDerivatives out;
  auto slot = [&](int t) -> int {
    for (size_t k = 0; k < out.active.size(); ++k)
      if (out.active[k] == t) return static_cast<int>(k);
    out.active.push_back(t);
    out.dsigma.emplace_back(Matrix::Zero(p, p));
    out.dmu.emplace_back(model.mean_structure ? Vector::Zero(p) : Vector());
    return static_cast<int>(out.active.size()) - 1;
  };

  const GroupLayout& layout = model.groups[group];
  const Matrix lp = lambda * phi;
  for (const auto& s : layout.lambda_free) {
    const int k = slot(s.theta);
    out.dsigma[k].row(s.row) += lp.col(s.col).transpose();
    out.dsigma[k].col(s.row) += lp.col(s.col);
    if (model.mean_structure) out.dmu[k][s.row] += kappa[s.col];
  }
  for (const auto& s : layout.phi_free) {
    const int k = slot(s.theta);
    if (s.row == s.col) {
      out.dsigma[k] += lambda.col(s.row) * lambda.col(s.row).transpose();
    } else {
      out.dsigma[k] += lambda.col(s.row) * lambda.col(s.col).transpose();
      out.dsigma[k] += lambda.col(s.col) * lambda.col(s.row).transpose();
    }
  }
  for (const auto& s : layout.theta_free) out.dsigma[slot(s.theta)](s.row, s.row) += 1.0;
  if (model.mean_structure) {
    for (const auto& s : layout.tau_free) out.dmu[slot(s.theta)][s.row] += 1.0;
    for (const auto& s : layout.kappa_free) out.dmu[slot(s.theta)] += lambda.col(s.row);
  }
  return out;
}

}  // namespace detail

double FitResult::total_multiplier() const {
  double m = 0.0;
  for (long n : group_n) m += multiplier_value(multiplier, n);
  return m;
}

double FitResult::theta_by_label(const std::string& label) const {
  const int idx = model->theta_index(label);
  if (idx < 0) throw ConfigError("no free parameter labeled " + label);
  return theta[idx];
}

double FitResult::factor_correlation(int group, int f1, int f2) const {
  Matrix lambda, phi;
  Vector theta_diag, tau, kappa;
  model->materialize(group, theta, lambda, phi, theta_diag, tau, kappa);
  return phi(f1, f2) / std::sqrt(phi(f1, f1) * phi(f2, f2));
}

}  // namespace mcms
