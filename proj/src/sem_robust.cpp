#include <cmath>

#include "mcms/errors.hpp"
#include "mcms/sem.hpp"

namespace mcms {

namespace {

// Per-group pieces of the weighted moment machinery in vech coordinates,
// extended by a mean block when the model carries a mean structure.
struct GroupBlocks {
  Matrix delta;  // (p* [+ p]) x n_free
  Matrix w;      // blockdiag(0.5 D'(Sigma^-1 x Sigma^-1)D, Sigma^-1)
  Matrix gamma;  // blockdiag-ish [[Gamma, C], [C', S_ml]]
};

GroupBlocks group_blocks(const CompiledModel& model, int g, const Vector& theta,
                         const SampleMoments& mom) {
  const int p = model.p();
  const int ps = vech_size(p);
  const bool means = model.mean_structure;
  const int dim = ps + (means ? p : 0);

  const ImpliedMoments im = implied_moments(model, g, theta);
  Eigen::LLT<Matrix> llt(im.sigma);
  if (llt.info() != Eigen::Success)
    throw FitError("implied covariance not positive definite at the solution");
  const Matrix sigma_inv = llt.solve(Matrix::Identity(p, p));

  GroupBlocks out;
  const Matrix dup = duplication_matrix(p);
  out.w = Matrix::Zero(dim, dim);
  out.w.topLeftCorner(ps, ps) =
      0.5 * dup.transpose() * kronecker(sigma_inv, sigma_inv) * dup;
  if (means) out.w.bottomRightCorner(p, p) = sigma_inv;

  out.delta = Matrix::Zero(dim, model.n_free);
  const detail::GroupDerivatives d = detail::group_derivatives(model, g, theta);
  for (size_t k = 0; k < d.active.size(); ++k) {
    out.delta.col(d.active[k]).head(ps) = vech(d.dsigma[k]);
    if (means) out.delta.col(d.active[k]).tail(p) = d.dmu[k];
  }

  if (!mom.has_gamma())
    throw ConfigError("robust statistics require fourth-moment matrices in the sample moments");
  out.gamma = Matrix::Zero(dim, dim);
  out.gamma.topLeftCorner(ps, ps) = mom.gamma;
  if (means) {
    out.gamma.bottomRightCorner(p, p) = mom.cov_ml;
    if (mom.gamma_cross.size() > 0) {
      out.gamma.topRightCorner(ps, p) = mom.gamma_cross;
      out.gamma.bottomLeftCorner(p, ps) = mom.gamma_cross.transpose();
    }
  }
  return out;
}

struct RobustPieces {
  Matrix bread;               // B = sum_g a_g Delta' W Delta
  std::vector<Matrix> meat;   // M_g = Delta' W Gamma W Delta
  std::vector<double> tr_wg;  // tr(W_g Gamma_g)
  std::vector<double> a;      // fit weights
  std::vector<double> m;      // multipliers
  double total_m = 0.0;
};

RobustPieces assemble(const FitResult& fit, const std::vector<SampleMoments>& moments) {
  const CompiledModel& model = *fit.model;
  RobustPieces rp;
  rp.bread = Matrix::Zero(model.n_free, model.n_free);
  for (const auto& mom : moments) rp.total_m += multiplier_value(fit.multiplier, mom.n);
  for (int g = 0; g < model.n_groups(); ++g) {
    const double m = multiplier_value(fit.multiplier, moments[g].n);
    const double a = m / rp.total_m;
    rp.m.push_back(m);
    rp.a.push_back(a);
    const GroupBlocks blocks = group_blocks(model, g, fit.theta, moments[g]);
    const Matrix wd = blocks.w * blocks.delta;
    rp.bread.noalias() += a * blocks.delta.transpose() * wd;
    rp.meat.push_back(wd.transpose() * blocks.gamma * wd);
    rp.tr_wg.push_back((blocks.w * blocks.gamma).trace());
  }
  return rp;
}

}  // namespace

SbResult satorra_bentler(const FitResult& fit, const std::vector<SampleMoments>& moments) {
  const CompiledModel& model = *fit.model;
  if (static_cast<int>(moments.size()) != model.n_groups())
    throw ConfigError("satorra_bentler: moments count does not match group count");
  if (fit.df == 0) return {1.0, fit.chisq};

  const RobustPieces rp = assemble(fit, moments);
  Eigen::LDLT<Matrix> bread(rp.bread);
  if (model.n_free > 0 && bread.info() != Eigen::Success)
    throw FitError("singular weighted information matrix in the scaling correction");

  // tr(U Gamma) summed over groups: tr(W G) - a_g tr(B^-1 Delta' W G W Delta)
  double trace = 0.0;
  for (size_t g = 0; g < rp.meat.size(); ++g) {
    trace += rp.tr_wg[g];
    if (model.n_free > 0) trace -= rp.a[g] * bread.solve(rp.meat[g]).trace();
  }
  const double scale = trace / fit.df;
  if (!(scale > 0.0))
    throw FitError("scaling correction is not positive; fourth-moment matrix is degenerate");
  return {scale, fit.chisq / scale};
}

SbResult satorra_bentler(const FitResult& fit, const SampleMoments& moments) {
  return satorra_bentler(fit, std::vector<SampleMoments>{moments});
}

void apply_satorra_bentler(FitResult& fit, const std::vector<SampleMoments>& moments) {
  const SbResult sb = satorra_bentler(fit, moments);
  fit.sb_scale = sb.scale;
  fit.chisq_sb = sb.chisq_sb;
}

SeResult robust_se(const FitResult& fit, const std::vector<SampleMoments>& moments) {
  const CompiledModel& model = *fit.model;
  if (static_cast<int>(moments.size()) != model.n_groups())
    throw ConfigError("robust_se: moments count does not match group count");
  SeResult out;
  if (model.n_free == 0) return out;  // nothing estimated, nothing to report

  const RobustPieces rp = assemble(fit, moments);
  Eigen::LDLT<Matrix> bread(rp.bread);
  if (bread.info() != Eigen::Success || !bread.isPositive())
    throw FitError("singular bread matrix; standard errors are undefined");

  const Matrix bread_inv = bread.solve(Matrix::Identity(model.n_free, model.n_free));
  Matrix meat = Matrix::Zero(model.n_free, model.n_free);
  for (size_t g = 0; g < rp.meat.size(); ++g) meat += rp.m[g] * rp.meat[g];
  meat /= rp.total_m * rp.total_m;

  const Matrix cov_robust = bread_inv * meat * bread_inv;
  out.robust = cov_robust.diagonal().cwiseMax(0.0).cwiseSqrt();
  out.normal = (bread_inv.diagonal() / rp.total_m).cwiseMax(0.0).cwiseSqrt();
  return out;
}

SeResult robust_se(const FitResult& fit, const SampleMoments& moments) {
  return robust_se(fit, std::vector<SampleMoments>{moments});
}

void apply_robust_se(FitResult& fit, const std::vector<SampleMoments>& moments) {
  const SeResult se = robust_se(fit, moments);
  fit.se_normal = se.normal;
  fit.se_robust = se.robust;
}

}  // namespace mcms
