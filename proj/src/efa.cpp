#include "mcms/efa.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>

#include "mcms/errors.hpp"

namespace mcms {

namespace {

Matrix correlation_from_cov(const Matrix& cov) {
  const int p = static_cast<int>(cov.rows());
  Vector sd = cov.diagonal().array().sqrt();
  Matrix r(p, p);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j) {
      if (sd[i] <= 0.0 || sd[j] <= 0.0)
        throw FitError("zero item variance; correlation matrix undefined");
      r(i, j) = cov(i, j) / (sd[i] * sd[j]);
    }
  return r;
}

// Flip each column so its largest-magnitude loading is positive; keeps the
// factor correlation matrix consistent.
void normalize_column_signs(Matrix& loadings, Matrix* phi) {
  for (int j = 0; j < loadings.cols(); ++j) {
    int arg = 0;
    loadings.col(j).cwiseAbs().maxCoeff(&arg);
    if (loadings(arg, j) < 0.0) {
      loadings.col(j) = -loadings.col(j);
      if (phi) {
        phi->row(j) = -phi->row(j);
        phi->col(j) = -phi->col(j);
      }
    }
  }
}

}  // namespace

EfaSolution extract_factors(const SampleMoments& moments, int q) {
  const int p = moments.p();
  if (q < 1) throw ConfigError("factor count must be at least 1");
  if (q > p) throw ConfigError("more factors requested than items");

  const Matrix r = correlation_from_cov(moments.cov);
  Eigen::FullPivLU<Matrix> lu(r);
  if (!lu.isInvertible())
    throw FitError("correlation matrix is singular; cannot start factor extraction");
  const Matrix rinv = lu.inverse();

  // squared multiple correlations as starting communalities
  Vector h(p);
  for (int i = 0; i < p; ++i) h[i] = std::min(std::max(1.0 - 1.0 / rinv(i, i), 0.0), 1.0);

  EfaSolution sol;
  sol.items = moments.items;
  bool converged = false;
  double last_delta = std::numeric_limits<double>::infinity();
  Matrix loadings;
  for (int iter = 0; iter < 1000; ++iter) {
    Matrix reduced = r;
    reduced.diagonal() = h;
    Eigen::SelfAdjointEigenSolver<Matrix> eig(reduced);
    if (eig.info() != Eigen::Success) throw FitError("eigendecomposition failed");

    loadings.resize(p, q);
    for (int j = 0; j < q; ++j) {
      const int src = p - 1 - j;  // eigenvalues ascend
      const double ev = std::max(eig.eigenvalues()[src], 0.0);
      loadings.col(j) = eig.eigenvectors().col(src) * std::sqrt(ev);
    }
    Vector h_new = loadings.array().square().rowwise().sum();
    for (int i = 0; i < p; ++i)
      if (h_new[i] > 1.0) {
        h_new[i] = 1.0;
        sol.heywood = true;
      }
    last_delta = (h_new - h).cwiseAbs().maxCoeff();
    h = h_new;
    sol.iterations = iter + 1;
    if (last_delta < 1e-6) {
      converged = true;
      break;
    }
  }
  // Two-item factors make the communality split nearly unidentified and the
  // sweep contraction ratio approaches 1; a near-stationary solution is still
  // usable, so only genuinely unsettled iterations are an error.
  if (!converged && last_delta >= 1e-4)
    throw FitError("principal-axis extraction did not converge (communality change " +
                   std::to_string(last_delta) + " after 1000 sweeps)");

  normalize_column_signs(loadings, nullptr);
  sol.loadings = std::move(loadings);
  sol.factor_correlations = Matrix::Identity(q, q);
  sol.communalities = h;
  return sol;
}

EfaSolution rotate_varimax(const EfaSolution& unrotated) {
  EfaSolution sol = unrotated;
  const int p = sol.p();
  const int q = sol.q();
  if (q < 2) return sol;

  Matrix x = sol.loadings;
  Vector sc(p);
  for (int i = 0; i < p; ++i) {
    sc[i] = x.row(i).norm();
    if (sc[i] > 0.0) x.row(i) /= sc[i];
  }

  Matrix t = Matrix::Identity(q, q);
  double d = 0.0;
  for (int iter = 0; iter < 1000; ++iter) {
    Matrix z = x * t;
    Matrix z2 = z.array().square();
    Matrix b = x.transpose() *
               (z.array().cube().matrix() - z * (z2.colwise().sum() / p).asDiagonal());
    Eigen::JacobiSVD<Matrix> svd(b, Eigen::ComputeThinU | Eigen::ComputeThinV);
    t = svd.matrixU() * svd.matrixV().transpose();
    const double dpast = d;
    d = svd.singularValues().sum();
    if (iter > 0 && d < dpast * (1.0 + 1e-5)) break;
  }
  Matrix z = x * t;
  for (int i = 0; i < p; ++i)
    if (sc[i] > 0.0) z.row(i) *= sc[i];

  normalize_column_signs(z, nullptr);
  sol.loadings = std::move(z);
  sol.factor_correlations = Matrix::Identity(q, q);
  return sol;
}

EfaSolution rotate_promax(const EfaSolution& unrotated, double kappa) {
  const int q = unrotated.q();
  EfaSolution sol = rotate_varimax(unrotated);
  sol.rotation = Rotation::Promax;
  if (q < 2) return sol;

  const Matrix& x = sol.loadings;
  // element-wise |a|^kappa with the original sign
  Matrix target =
      x.array() * x.array().abs().pow(kappa - 1.0);

  Eigen::LDLT<Matrix> xtx(x.transpose() * x);
  if (xtx.info() != Eigen::Success || !xtx.isPositive())
    throw FitError("singular varimax pattern; promax transformation undefined");
  Matrix u = xtx.solve(x.transpose() * target);

  Eigen::FullPivLU<Matrix> utu(u.transpose() * u);
  if (!utu.isInvertible()) throw FitError("singular promax transformation");
  Vector dnorm = utu.inverse().diagonal().array().sqrt();
  u = u * dnorm.asDiagonal();

  Matrix pattern = x * u;
  Matrix phi = (u.transpose() * u).inverse();
  phi = ((phi + phi.transpose()) / 2.0).eval();
  phi.diagonal().setOnes();

  normalize_column_signs(pattern, &phi);
  sol.loadings = std::move(pattern);
  sol.factor_correlations = std::move(phi);
  return sol;
}

namespace {

struct ItemView {
  std::string code;
  int factor = 0;       // theorized factor index
  double primary = 0.0;  // signed loading on the column assigned to its factor
  double max_cross = 0.0;
};

// Greedy one-to-one assignment of rotated columns to theorized factors by
// mean |loading| of the factor's current items.
std::vector<int> assign_columns(const Matrix& loadings,
                                const std::vector<std::vector<int>>& factor_rows) {
  const int q = static_cast<int>(loadings.cols());
  Matrix score = Matrix::Zero(q, q);  // factor x column
  for (int f = 0; f < q; ++f) {
    for (int row : factor_rows[f]) score.row(f) += loadings.row(row).cwiseAbs();
    if (!factor_rows[f].empty()) score.row(f) /= static_cast<double>(factor_rows[f].size());
  }
  std::vector<int> col_of_factor(q, -1);
  std::vector<bool> factor_done(q, false), col_done(q, false);
  for (int step = 0; step < q; ++step) {
    int best_f = -1, best_c = -1;
    double best = -1.0;
    for (int f = 0; f < q; ++f) {
      if (factor_done[f]) continue;
      for (int c = 0; c < q; ++c) {
        if (col_done[c]) continue;
        if (score(f, c) > best) {
          best = score(f, c);
          best_f = f;
          best_c = c;
        }
      }
    }
    col_of_factor[best_f] = best_c;
    factor_done[best_f] = true;
    col_done[best_c] = true;
  }
  return col_of_factor;
}

}  // namespace

ReductionResult reduce_item_pool(const ResponseMatrix& m, const ScaleDefinition& def,
                                 const ReductionPolicy& policy) {
  if (policy.min_loading <= 0.0 || policy.min_loading >= 1.0 ||
      policy.max_crossloading <= 0.0 || policy.max_crossloading >= 1.0)
    throw ConfigError("reduction thresholds must lie strictly between 0 and 1");
  const int q = static_cast<int>(def.factors.size());
  std::vector<std::string> kept = def.flattened_items();
  for (const auto& item : kept)
    if (std::find(m.items.begin(), m.items.end(), item) == m.items.end())
      throw ConfigError("response matrix is missing item " + item);

  ReductionResult result;
  int iteration = 0;
  while (true) {
    ++iteration;

    // submatrix of kept columns
    ResponseMatrix sub;
    sub.group = m.group;
    sub.items = kept;
    sub.rows.resize(m.n(), static_cast<long>(kept.size()));
    for (size_t c = 0; c < kept.size(); ++c) {
      const auto pos = std::find(m.items.begin(), m.items.end(), kept[c]) - m.items.begin();
      sub.rows.col(static_cast<long>(c)) = m.rows.col(pos);
    }

    const SampleMoments moments = compute_sample_moments(sub, false);
    const EfaSolution rotated = rotate_promax(extract_factors(moments, q));

    std::vector<std::vector<int>> factor_rows(q);
    std::vector<ItemView> views(kept.size());
    for (size_t i = 0; i < kept.size(); ++i) {
      const FactorDef* fd = def.factor_of(kept[i]);
      const int f = def.factor_index(fd->name);
      factor_rows[f].push_back(static_cast<int>(i));
      views[i].code = kept[i];
      views[i].factor = f;
    }
    const std::vector<int> col_of_factor = assign_columns(rotated.loadings, factor_rows);
    for (size_t i = 0; i < kept.size(); ++i) {
      const int c = col_of_factor[views[i].factor];
      views[i].primary = rotated.loadings(static_cast<int>(i), c);
      double mc = 0.0;
      for (int j = 0; j < q; ++j)
        if (j != c) mc = std::max(mc, std::abs(rotated.loadings(static_cast<int>(i), j)));
      views[i].max_cross = mc;
    }

    // violation classes, in priority order
    std::vector<std::pair<const ItemView*, std::string>> candidates;
    auto collect = [&](auto&& pred, const std::string& reason) {
      for (const auto& v : views)
        if (pred(v)) candidates.emplace_back(&v, reason);
      return !candidates.empty();
    };

    const auto factor_size = [&](int f) { return factor_rows[f].size(); };
    bool found =
        policy.enforce_theorized_factor &&
        collect(
            [&](const ItemView& v) {
              int arg = 0;
              const Eigen::Index row = &v - views.data();
              rotated.loadings.row(row).cwiseAbs().maxCoeff(&arg);
              return arg != col_of_factor[v.factor];
            },
            "wrong factor");
    if (!found)
      found = collect(
          [&](const ItemView& v) { return v.max_cross > policy.max_crossloading; },
          "cross-loading");
    if (!found)
      found = collect(
          [&](const ItemView& v) {
            const double threshold = factor_size(v.factor) > 3
                                         ? policy.min_loading
                                         : std::min(policy.min_loading, 0.5);
            return v.primary < threshold;
          },
          "low loading");
    if (!found && !policy.similar_item_pairs.empty()) {
      for (const auto& [a, b] : policy.similar_item_pairs) {
        const ItemView* va = nullptr;
        const ItemView* vb = nullptr;
        for (const auto& v : views) {
          if (v.code == a) va = &v;
          if (v.code == b) vb = &v;
        }
        if (!va || !vb) continue;
        if (va->factor != vb->factor) continue;
        if (factor_size(va->factor) <= 3) continue;
        const ItemView* lower =
            va->primary < vb->primary ? va : (vb->primary < va->primary ? vb : (va->code < vb->code ? vb : va));
        candidates.emplace_back(lower, "similar item");
      }
      found = !candidates.empty();
    }

    if (!found) break;

    // lowest primary loading first, ties by item code
    std::sort(candidates.begin(), candidates.end(), [](const auto& a, const auto& b) {
      if (a.first->primary != b.first->primary) return a.first->primary < b.first->primary;
      return a.first->code < b.first->code;
    });
    const ItemView& worst = *candidates.front().first;
    if (factor_size(worst.factor) <= 2)
      throw FitError("removing " + worst.code + " would leave factor " +
                     def.factors[worst.factor].name + " with fewer than 2 items");

    result.log.push_back({iteration, worst.code, candidates.front().second, worst.primary,
                          worst.max_cross});
    kept.erase(std::find(kept.begin(), kept.end(), worst.code));
  }

  result.kept = std::move(kept);
  return result;
}

std::string removal_log_text(const std::vector<RemovalEntry>& log) {
  std::string out;
  char buf[256];
  for (const auto& e : log) {
    std::snprintf(buf, sizeof(buf), "%d\t%s\t%s\t%.4f\t%.4f\n", e.iteration, e.item.c_str(),
                  e.reason.c_str(), e.primary_loading, e.max_crossloading);
    out += buf;
  }
  return out;
}

}  // namespace mcms
