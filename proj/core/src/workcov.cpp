#include "fgee/workcov.hpp"

#include <algorithm>
#include <cmath>

#include "fgee/errors.hpp"
#include "fgee/parallel.hpp"

namespace fgee {

CorrStructure parse_structure(const std::string& name) {
  if (name == "independence") return CorrStructure::independence;
  if (name == "exchangeable") return CorrStructure::exchangeable;
  if (name == "ar1") return CorrStructure::ar1;
  throw validation_error("unknown correlation structure '" + name +
                         "' (expected independence|exchangeable|ar1)");
}

std::string structure_name(CorrStructure s) {
  switch (s) {
    case CorrStructure::independence: return "independence";
    case CorrStructure::exchangeable: return "exchangeable";
    case CorrStructure::ar1: return "ar1";
  }
  return "?";
}

double truncate_exchangeable(double rho, double eps, int n_max) {
  // Lower bound keeps every cluster's block positive definite under a
  // shared rho(s); n_max is the conservative choice.
  double lo = -1.0 + eps;
  if (n_max >= 2) lo = std::max(lo, -1.0 / (n_max - 1) + eps);
  return std::clamp(rho, lo, 1.0 - eps);
}

double truncate_ar1(double rho, double eps) { return std::clamp(rho, 0.0, 1.0 - eps); }

Eigen::VectorXd estimate_rho_exchangeable(const ScaledResidualPanel& panel, double eps,
                                          bool* all_singleton, long* truncations) {
  if (panel.r.empty()) throw validation_error("estimate_rho_exchangeable: empty panel");
  const int L = static_cast<int>(panel.r.front().cols());
  int n_max = 0;
  int contributing = 0;
  for (const auto& ri : panel.r) {
    n_max = std::max(n_max, static_cast<int>(ri.rows()));
    if (ri.rows() >= 2) ++contributing;
  }
  if (all_singleton) *all_singleton = (contributing == 0);
  Eigen::VectorXd rho = Eigen::VectorXd::Zero(L);
  if (contributing == 0) return rho;  // warning flag carries the signal

  for (const auto& ri : panel.r) {
    const int n = static_cast<int>(ri.rows());
    if (n < 2) continue;
    const double pairs = 0.5 * n * (n - 1);
    for (int l = 0; l < L; ++l) {
      const double s1 = ri.col(l).sum();
      const double s2 = ri.col(l).squaredNorm();
      // Mean product over distinct pairs j < k.
      rho[l] += 0.5 * (s1 * s1 - s2) / pairs;
    }
  }
  rho /= contributing;
  for (int l = 0; l < L; ++l) {
    const double t = truncate_exchangeable(rho[l], eps, n_max);
    if (truncations && t != rho[l]) ++(*truncations);
    rho[l] = t;
  }
  return rho;
}

Eigen::VectorXd estimate_rho_ar1(const ScaledResidualPanel& panel, double eps,
                                 long* truncations) {
  if (panel.r.empty()) throw validation_error("estimate_rho_ar1: empty panel");
  const int L = static_cast<int>(panel.r.front().cols());
  const int N = static_cast<int>(panel.r.size());
  Eigen::VectorXd rho = Eigen::VectorXd::Zero(L);
  for (const auto& ri : panel.r) {
    const int n = static_cast<int>(ri.rows());
    for (int l = 0; l < L; ++l) {
      double num = 0.0;
      for (int j = 0; j + 1 < n; ++j) num += ri(j, l) * ri(j + 1, l);
      const double den = ri.col(l).squaredNorm();
      if (den > 0.0) rho[l] += num / den;
    }
  }
  rho /= N;
  for (int l = 0; l < L; ++l) {
    const double t = truncate_ar1(rho[l], eps);
    if (truncations && t != rho[l]) ++(*truncations);
    rho[l] = t;
  }
  return rho;
}

Eigen::VectorXd smooth_rho(const Eigen::VectorXd& rho, int window) {
  const int L = static_cast<int>(rho.size());
  if (window < 1 || window % 2 == 0) throw validation_error("smooth_rho: window must be odd");
  if (window > L) throw validation_error("smooth_rho: window exceeds grid length");
  if (window == 1) return rho;
  const int half = window / 2;
  Eigen::VectorXd out(L);
  for (int l = 0; l < L; ++l) {
    // Shrink the window near the edges so it stays centered.
    const int h = std::min({half, l, L - 1 - l});
    out[l] = rho.segment(l - h, 2 * h + 1).mean();
  }
  return out;
}

void apply_corr_inverse(CorrStructure structure, double rho, Eigen::Ref<Eigen::MatrixXd> cols) {
  const int n = static_cast<int>(cols.rows());
  switch (structure) {
    case CorrStructure::independence: return;
    case CorrStructure::exchangeable: {
      if (rho == 0.0 || n == 1) return;
      const double denom = (1.0 - rho) + n * rho;
      if (denom <= 0.0 || rho >= 1.0)
        throw numeric_error("exchangeable inverse: positive definiteness violated (rho=" +
                            std::to_string(rho) + ", n=" + std::to_string(n) + ")");
      const double a = 1.0 / (1.0 - rho);
      const double c = rho / ((1.0 - rho) * denom);
      for (int j = 0; j < cols.cols(); ++j) {
        const double colsum = cols.col(j).sum();
        cols.col(j) = a * cols.col(j).array() - c * colsum;
      }
      return;
    }
    case CorrStructure::ar1: {
      if (rho >= 1.0 || rho < 0.0)
        throw numeric_error("ar1 inverse: rho outside [0,1): " + std::to_string(rho));
      if (rho == 0.0 || n == 1) return;
      const double inv = 1.0 / (1.0 - rho * rho);
      const double diag_mid = (1.0 + rho * rho) * inv;
      const double off = -rho * inv;
      Eigen::VectorXd tmp(n);
      for (int j = 0; j < cols.cols(); ++j) {
        auto x = cols.col(j);
        tmp[0] = inv * x[0] + off * x[1];
        for (int r = 1; r + 1 < n; ++r) tmp[r] = diag_mid * x[r] + off * (x[r - 1] + x[r + 1]);
        tmp[n - 1] = inv * x[n - 1] + off * x[n - 2];
        x = tmp;
      }
      return;
    }
  }
}

namespace {

Eigen::VectorXd sandwich_by_sqrt_ainv(CorrStructure structure, double rho,
                                      const Eigen::VectorXd& a_diag, const Eigen::VectorXd& r) {
  const int n = static_cast<int>(r.size());
  if (a_diag.size() != n) throw validation_error("structured solve: diagonal length mismatch");
  Eigen::VectorXd sqrt_ainv(n);
  for (int j = 0; j < n; ++j) {
    if (!(a_diag[j] > 0.0)) throw numeric_error("structured solve: nonpositive variance entry");
    sqrt_ainv[j] = 1.0 / std::sqrt(a_diag[j]);
  }
  Eigen::MatrixXd col = (sqrt_ainv.array() * r.array()).matrix();
  apply_corr_inverse(structure, rho, col);
  return (sqrt_ainv.array() * col.col(0).array()).matrix();
}

}  // namespace

Eigen::VectorXd apply_exchangeable_inverse(double rho, const Eigen::VectorXd& a_diag,
                                           const Eigen::VectorXd& r) {
  return sandwich_by_sqrt_ainv(CorrStructure::exchangeable, rho, a_diag, r);
}

Eigen::VectorXd solve_ar1_toeplitz(double rho, const Eigen::VectorXd& a_diag,
                                   const Eigen::VectorXd& r) {
  return sandwich_by_sqrt_ainv(CorrStructure::ar1, rho, a_diag, r);
}

Eigen::VectorXd apply_vinv(CorrStructure structure, double rho, const Eigen::VectorXd& a_diag,
                           const Eigen::VectorXd& r) {
  return sandwich_by_sqrt_ainv(structure, rho, a_diag, r);
}

void quadratic_forms_cluster(const ModelContext& ctx, int i, const LinkEval& link,
                             const Eigen::ArrayXXd& resid, const WorkingCovModel& cov, double phi,
                             Eigen::MatrixXd& W, Eigen::VectorXd& b) {
  const Cluster& cluster = ctx.data->clusters[i];
  const int n = cluster.n();
  const int L = ctx.L();
  const int m = ctx.m();
  const int blocks = ctx.q() + 1;
  const int width = ctx.basis.degree + 1;

  W.setZero(ctx.p(), ctx.p());
  b.setZero(ctx.p());

  Eigen::MatrixXd C;                       // n x (q+1) covariate factor
  Eigen::MatrixXd Gt(n, blocks);           // A^{-1/2} diag(dmu) C
  Eigen::MatrixXd Mt(n, blocks);           // R^{-1} Gt
  Eigen::VectorXd rt(n), sqrt_ainv(n);
  Eigen::MatrixXd Cl(blocks, blocks);
  Eigen::VectorXd dl(blocks);

  for (int l = 0; l < L; ++l) {
    ctx.covariate_rows(i, l, C);
    for (int j = 0; j < n; ++j) {
      const double a = phi * link.var(j, l);
      if (!(a > 0.0)) throw numeric_error("quadratic_forms: nonpositive variance entry");
      sqrt_ainv[j] = 1.0 / std::sqrt(a);
    }
    const double dw_scale = 1.0;  // derivative weights live in Gt rows
    (void)dw_scale;
    for (int j = 0; j < n; ++j) {
      const double w = sqrt_ainv[j] * link.dmu(j, l);
      for (int r = 0; r < blocks; ++r) Gt(j, r) = w * C(j, r);
      rt[j] = sqrt_ainv[j] * resid(j, l);
    }
    Mt = Gt;
    apply_corr_inverse(cov.structure, cov.rho_at(l), Mt);
    {
      Eigen::Map<Eigen::MatrixXd> rmap(rt.data(), n, 1);
      apply_corr_inverse(cov.structure, cov.rho_at(l), rmap);
    }
    Cl.noalias() = Gt.transpose() * Mt;   // D(s)^T V(s)^{-1} D(s) covariate factor
    dl.noalias() = Gt.transpose() * rt;

    const int f = ctx.basis.first[l];
    for (int r1 = 0; r1 < blocks; ++r1) {
      b.segment(r1 * m + f, width) += dl[r1] * ctx.basis.band.row(l).transpose();
      for (int r2 = 0; r2 < blocks; ++r2) {
        const double c = Cl(r1, r2);
        if (c == 0.0) continue;
        for (int d1 = 0; d1 < width; ++d1) {
          const double v1 = c * ctx.basis.band(l, d1);
          W.block(r1 * m + f + d1, r2 * m + f, 1, width) +=
              v1 * ctx.basis.band.row(l);
        }
      }
    }
  }
}

ClusterSummaries compute_cluster_summaries(const ModelContext& ctx, const Eigen::VectorXd& theta,
                                           const WorkingCovModel& cov, double phi, int threads) {
  const int N = ctx.N();
  ClusterSummaries out;
  out.W.resize(N);
  out.b.resize(N);
  out.n_per_cluster.resize(N);
  std::vector<long> clamps(N, 0);

  const Eigen::MatrixXd curves = ctx.coefficient_curves(theta);
  parallel_for(N, threads, [&](std::size_t i) {
    const Cluster& cluster = ctx.data->clusters[i];
    const Eigen::ArrayXXd eta = ctx.linear_predictor(static_cast<int>(i), curves);
    const LinkEval link = evaluate_link(ctx.family, eta);
    const Eigen::ArrayXXd resid = cluster.y.array() - link.mu;
    quadratic_forms_cluster(ctx, static_cast<int>(i), link, resid, cov, phi, out.W[i], out.b[i]);
    out.n_per_cluster[i] = cluster.n();
    clamps[i] = link.clamped;
  });

  out.sumW = Eigen::MatrixXd::Zero(ctx.p(), ctx.p());
  out.sumb = Eigen::VectorXd::Zero(ctx.p());
  for (int i = 0; i < N; ++i) {  // ordered reduction: thread-count invariant
    out.sumW += out.W[i];
    out.sumb += out.b[i];
    out.total_n += out.n_per_cluster[i];
    out.eta_clamps += clamps[i];
  }
  return out;
}

WorkCovEstimate estimate_working_cov(const ModelContext& ctx, const Eigen::VectorXd& theta,
                                     CorrStructure structure, double eps, int smooth_window,
                                     int threads) {
  const int N = ctx.N();
  WorkCovEstimate out;
  out.model.structure = structure;
  out.model.eps = eps;

  // Raw Pearson residuals a cluster at a time; dispersion first, then the
  // panel is rescaled so r = A^{-1/2}(y - mu) with A = phi * v(mu).
  ScaledResidualPanel panel;
  panel.r.resize(N);
  std::vector<long> clamps(N, 0);
  std::vector<double> sumsq(N, 0.0);
  const Eigen::MatrixXd curves = ctx.coefficient_curves(theta);
  parallel_for(N, threads, [&](std::size_t i) {
    const Cluster& cluster = ctx.data->clusters[i];
    const Eigen::ArrayXXd eta = ctx.linear_predictor(static_cast<int>(i), curves);
    const LinkEval link = evaluate_link(ctx.family, eta);
    panel.r[i] = pearson_residuals(ctx.family, cluster.y.array(), link.mu).matrix();
    sumsq[i] = panel.r[i].squaredNorm();
    clamps[i] = link.clamped;
  });
  double total_sq = 0.0;
  for (int i = 0; i < N; ++i) {
    total_sq += sumsq[i];
    out.eta_clamps += clamps[i];
  }
  out.phi = estimate_dispersion(ctx.family, total_sq, ctx.data->total_values(), ctx.p());
  if (out.phi != 1.0) {
    const double scale = 1.0 / std::sqrt(out.phi);
    for (auto& ri : panel.r) ri *= scale;
  }

  if (structure == CorrStructure::independence) return out;

  bool all_singleton = false;
  if (structure == CorrStructure::exchangeable) {
    out.model.rho = estimate_rho_exchangeable(panel, eps, &all_singleton, &out.truncations);
  } else {
    out.model.rho = estimate_rho_ar1(panel, eps, &out.truncations);
  }
  out.model.singleton_warning = all_singleton;

  if (smooth_window > 1) {
    out.model.rho = smooth_rho(out.model.rho, smooth_window);
    const int n_max = ctx.data->max_cluster_size();
    for (int l = 0; l < out.model.rho.size(); ++l) {
      out.model.rho[l] = structure == CorrStructure::exchangeable
                             ? truncate_exchangeable(out.model.rho[l], eps, n_max)
                             : truncate_ar1(out.model.rho[l], eps);
    }
    out.model.smoothed = true;
  }
  return out;
}

}  // namespace fgee
