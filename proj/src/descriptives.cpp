#include "mcms/descriptives.hpp"

#include <cmath>
#include <limits>

#include "mcms/distributions.hpp"
#include "mcms/errors.hpp"

namespace mcms {

namespace {

// n x q matrix of per-respondent factor composites (unweighted item means).
Matrix composite_matrix(const ResponseMatrix& m, const ScaleDefinition& def) {
  const long n = m.n();
  const int q = static_cast<int>(def.factors.size());
  Matrix comp = Matrix::Zero(n, q);
  for (int f = 0; f < q; ++f) {
    const auto& factor = def.factors[f];
    for (const auto& item : factor.items) {
      int col = -1;
      for (size_t c = 0; c < m.items.size(); ++c)
        if (m.items[c] == item) { col = static_cast<int>(c); break; }
      if (col < 0) throw ConfigError("response matrix is missing item " + item);
      comp.col(f) += m.rows.col(col);
    }
    comp.col(f) /= static_cast<double>(factor.items.size());
  }
  return comp;
}

}  // namespace

CompositeStats composite_stats(const ResponseMatrix& m, const ScaleDefinition& def) {
  const Matrix comp = composite_matrix(m, def);
  const long n = m.n();
  CompositeStats out;
  for (const auto& f : def.factors) out.factors.push_back(f.name);
  out.mean = comp.colwise().mean();
  if (n < 2) {
    out.sd = Vector::Zero(comp.cols());
    return out;
  }
  Matrix centered = comp.rowwise() - out.mean.transpose();
  out.sd = (centered.array().square().colwise().sum() / static_cast<double>(n - 1))
               .sqrt()
               .matrix()
               .transpose();
  return out;
}

CompositeCorrelations composite_correlations(const ResponseMatrix& m,
                                             const ScaleDefinition& def) {
  const long n = m.n();
  if (n < 3) throw ConfigError("composite correlations require at least 3 respondents");
  const Matrix comp = composite_matrix(m, def);
  const int q = static_cast<int>(comp.cols());

  CompositeCorrelations out;
  out.n = n;
  for (const auto& f : def.factors) out.factors.push_back(f.name);

  Matrix centered = comp.rowwise() - comp.colwise().mean();
  Matrix cov = (centered.transpose() * centered) / static_cast<double>(n - 1);
  out.corr = Matrix::Identity(q, q);
  out.p_values = Matrix::Zero(q, q);
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (int i = 0; i < q; ++i) {
    for (int j = 0; j < i; ++j) {
      const double denom = std::sqrt(cov(i, i) * cov(j, j));
      if (denom <= 0.0) {
        out.corr(i, j) = out.corr(j, i) = nan;
        out.p_values(i, j) = out.p_values(j, i) = nan;
        out.undefined.emplace_back(out.factors[i], out.factors[j]);
        continue;
      }
      const double r = cov(i, j) / denom;
      out.corr(i, j) = out.corr(j, i) = r;
      const double p = correlation_p_value(r, n);
      out.p_values(i, j) = out.p_values(j, i) = p;
    }
  }
  return out;
}

double cronbach_alpha_from_cov(const Matrix& item_cov) {
  const int k = static_cast<int>(item_cov.rows());
  const double total_var = item_cov.sum();
  if (total_var <= 0.0) throw FitError("alpha undefined: zero total variance");
  const double item_var_sum = item_cov.diagonal().sum();
  return (static_cast<double>(k) / (k - 1)) * (1.0 - item_var_sum / total_var);
}

AlphaEstimate cronbach_alpha(const ResponseMatrix& m, const ScaleDefinition& def,
                             const std::string& factor_name) {
  const FactorDef* factor = nullptr;
  for (const auto& f : def.factors)
    if (f.name == factor_name) { factor = &f; break; }
  if (!factor) throw ConfigError("unknown factor " + factor_name);
  const int k = static_cast<int>(factor->items.size());
  const long n = m.n();
  if (k < 2) throw ConfigError("alpha requires at least 2 items");
  if (n < 3) throw ConfigError("alpha requires at least 3 respondents");

  Matrix sub(n, k);
  for (int c = 0; c < k; ++c) {
    int col = -1;
    for (size_t j = 0; j < m.items.size(); ++j)
      if (m.items[j] == factor->items[c]) { col = static_cast<int>(j); break; }
    if (col < 0) throw ConfigError("response matrix is missing item " + factor->items[c]);
    sub.col(c) = m.rows.col(col);
  }
  Matrix centered = sub.rowwise() - sub.colwise().mean();
  Matrix cov = (centered.transpose() * centered) / static_cast<double>(n - 1);

  AlphaEstimate est;
  est.k = k;
  est.n = n;
  est.alpha = cronbach_alpha_from_cov(cov);

  // Feldt interval: 1 - (1-alpha) scaled by F quantiles with
  // (n-1, (n-1)(k-1)) degrees of freedom.
  const double df1 = static_cast<double>(n - 1);
  const double df2 = static_cast<double>(n - 1) * (k - 1);
  est.ci_low = 1.0 - (1.0 - est.alpha) * f_quantile(0.975, df1, df2);
  est.ci_high = 1.0 - (1.0 - est.alpha) * f_quantile(0.025, df1, df2);
  return est;
}

}  // namespace mcms
