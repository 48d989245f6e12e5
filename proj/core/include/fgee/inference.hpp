#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "fgee/model.hpp"
#include "fgee/onestep.hpp"
#include "fgee/workcov.hpp"

namespace fgee {

struct ThetaCovariance {
  enum class Source { sandwich, fast_bootstrap };
  Eigen::MatrixXd cov;
  Source source = Source::sandwich;
  int boot_reps = 0;
  bool rank_deficient = false;
};

/// Sandwich variance (1/N) H^{-1} M H^{-1} with
/// H = (1/N) sum W_i + Lambda S and M = (1/N) sum U_i U_i',
/// U_i = b_i - Lambda S theta. The working covariance passed in must be
/// the second-pass estimate (rho at the supplied theta).
ThetaCovariance sandwich_variance(const ModelContext& ctx, const Eigen::VectorXd& theta,
                                  const WorkingCovModel& cov, double phi,
                                  const Eigen::VectorXd& lambda, int threads,
                                  SolveDiagnostics* diag = nullptr);

/// Fast cluster bootstrap of the one-step update: resamples clusters with
/// replacement, reusing the full-sample bracket factorization across all T
/// replicates. Reproducible for a fixed seed regardless of threading; set
/// `draws` to keep the replicate coefficient vectors (nonparametric bands).
ThetaCovariance fast_cluster_bootstrap(const OneStepInputs& inputs,
                                       const Eigen::VectorXd& lambda1, int T,
                                       std::uint64_t seed, int threads,
                                       std::vector<Eigen::VectorXd>* draws = nullptr,
                                       SolveDiagnostics* diag = nullptr);

/// Per-coefficient L x L blocks B Sigma_r B'; cross-coefficient blocks are
/// never materialized.
std::vector<Eigen::MatrixXd> beta_covariance(const Eigen::MatrixXd& theta_cov,
                                             const BasisMatrix& basis, int q);

/// Pointwise standard errors only (the diagonal of beta_covariance).
Eigen::MatrixXd beta_standard_errors(const Eigen::MatrixXd& theta_cov, const BasisMatrix& basis,
                                     int q);

/// Max-|t| critical value from parametric draws
/// theta ~ N(0, sigma_theta): the 1-alpha empirical quantile of
/// max_d |theta_d| / sd_d. Negative eigenvalues are clipped at zero
/// (flagged through `clipped`).
double max_t_quantile_parametric(const Eigen::MatrixXd& sigma_theta, double alpha, int T,
                                 std::uint64_t seed, bool* clipped = nullptr);

/// Same construction on bootstrap draws, centered at their mean. When
/// T < 1/alpha the quantile is refused and the max statistic is returned
/// (flagged through `too_few`).
double max_t_quantile_draws(const std::vector<Eigen::VectorXd>& draws, double alpha,
                            bool* too_few = nullptr);

struct CoefficientBand {
  Eigen::VectorXd estimate;
  Eigen::VectorXd se;
  Eigen::VectorXd pw_lo, pw_hi;
  Eigen::VectorXd joint_lo, joint_hi;
  double q_joint = 0.0;
  double alpha = 0.05;
};

/// beta +- z_{1-alpha/2} se.
std::pair<Eigen::VectorXd, Eigen::VectorXd> pointwise_band(const Eigen::VectorXd& beta,
                                                           const Eigen::VectorXd& se,
                                                           double alpha);

/// Assembles pointwise and joint intervals from an estimate, its pointwise
/// standard errors, and the max-|t| critical value.
CoefficientBand make_band(const Eigen::VectorXd& beta, const Eigen::VectorXd& se, double q_joint,
                          double alpha);

}  // namespace fgee
