#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "fgee/model.hpp"

namespace fgee {

enum class CorrStructure { independence, exchangeable, ar1 };

CorrStructure parse_structure(const std::string& name);
std::string structure_name(CorrStructure s);

/// Working covariance model: block-diagonal across grid points, with one
/// correlation parameter rho(s_l) per point. Exchangeable rho lives in
/// (max(-1, -1/(n_max-1)) + eps, 1 - eps]; AR1 rho in [0, 1 - eps].
struct WorkingCovModel {
  CorrStructure structure = CorrStructure::independence;
  Eigen::VectorXd rho;  // per grid point; empty for independence
  double eps = 1e-3;
  bool smoothed = false;
  bool singleton_warning = false;

  double rho_at(int l) const { return structure == CorrStructure::independence ? 0.0 : rho[l]; }
  static WorkingCovModel independence() { return {}; }
};

/// Per-cluster scaled residuals A^{-1/2}(Y - mu), one n_i x L matrix per
/// cluster (A includes the dispersion).
struct ScaledResidualPanel {
  std::vector<Eigen::MatrixXd> r;
};

double truncate_exchangeable(double rho, double eps, int n_max);
double truncate_ar1(double rho, double eps);

/// Method-of-moments exchangeable estimator: per point, the average over
/// clusters (n_i >= 2) of the mean pairwise product over distinct pairs
/// j < k. Truncated into the positive definite range for n_max.
Eigen::VectorXd estimate_rho_exchangeable(const ScaledResidualPanel& panel, double eps,
                                          bool* all_singleton = nullptr,
                                          long* truncations = nullptr);

/// Lag-1 Yule-Walker per cluster, averaged over clusters, truncated into
/// [0, 1-eps]. Clusters with a zero denominator contribute 0 and are
/// counted.
Eigen::VectorXd estimate_rho_ar1(const ScaledResidualPanel& panel, double eps,
                                 long* truncations = nullptr);

/// Centered moving average with shrinking windows at the boundaries.
/// window must be odd and <= length; window 1 is the identity.
Eigen::VectorXd smooth_rho(const Eigen::VectorXd& rho, int window);

/// R^{-1} x per column on the correlation scale, in place. O(n) per
/// column for every structure; no n x n matrix is formed.
void apply_corr_inverse(CorrStructure structure, double rho, Eigen::Ref<Eigen::MatrixXd> cols);

/// V(s)^{-1} r = A^{-1/2} R^{-1} A^{-1/2} r via the analytic exchangeable
/// inverse.
Eigen::VectorXd apply_exchangeable_inverse(double rho, const Eigen::VectorXd& a_diag,
                                           const Eigen::VectorXd& r);

/// V(s)^{-1} r using the exact tridiagonal inverse of the AR1 correlation
/// matrix.
Eigen::VectorXd solve_ar1_toeplitz(double rho, const Eigen::VectorXd& a_diag,
                                   const Eigen::VectorXd& r);

Eigen::VectorXd apply_vinv(CorrStructure structure, double rho, const Eigen::VectorXd& a_diag,
                           const Eigen::VectorXd& r);

/// Per-cluster W_i = D_i^T V_i^{-1} D_i and b_i = D_i^T V_i^{-1} (Y_i - mu_i),
/// with running sums for the one-step bracket.
struct ClusterSummaries {
  std::vector<Eigen::MatrixXd> W;
  std::vector<Eigen::VectorXd> b;
  std::vector<int> n_per_cluster;
  Eigen::MatrixXd sumW;
  Eigen::VectorXd sumb;
  double total_n = 0.0;
  long eta_clamps = 0;

  int N() const { return static_cast<int>(W.size()); }
};

/// One cluster's quadratic forms. V_i never couples grid points, so the
/// accumulation runs point by point; the structured inverse is applied
/// column-wise to the covariate factor of D_i(s), and the basis factor
/// enters through a Kronecker update that touches only the degree+1
/// active columns.
void quadratic_forms_cluster(const ModelContext& ctx, int i, const LinkEval& link,
                             const Eigen::ArrayXXd& resid, const WorkingCovModel& cov, double phi,
                             Eigen::MatrixXd& W, Eigen::VectorXd& b);

ClusterSummaries compute_cluster_summaries(const ModelContext& ctx, const Eigen::VectorXd& theta,
                                           const WorkingCovModel& cov, double phi, int threads);

/// Dispersion + correlation estimation pass at a given theta (run once at
/// theta-hat(0) for the update and again at theta-hat(1) for the
/// sandwich).
struct WorkCovEstimate {
  WorkingCovModel model;
  double phi = 1.0;
  long eta_clamps = 0;
  long truncations = 0;
};

WorkCovEstimate estimate_working_cov(const ModelContext& ctx, const Eigen::VectorXd& theta,
                                     CorrStructure structure, double eps, int smooth_window,
                                     int threads);

}  // namespace fgee
