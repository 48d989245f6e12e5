#pragma once

#include <Eigen/Dense>
#include <string>

namespace fgee {

enum class FamilyTag { gaussian, binomial, poisson };

/// Quasi-likelihood family: link, variance function, dispersion. The
/// dispersion is estimated for gaussian outcomes and fixed at 1 otherwise.
struct Family {
  FamilyTag tag = FamilyTag::gaussian;

  static Family gaussian() { return {FamilyTag::gaussian}; }
  static Family binomial() { return {FamilyTag::binomial}; }
  static Family poisson() { return {FamilyTag::poisson}; }
  static Family parse(const std::string& name);
  std::string name() const;
  bool fixed_dispersion() const { return tag != FamilyTag::gaussian; }
};

/// Linear predictors are clamped to +-kEtaClamp before exp/logistic
/// evaluation; clamp events are counted and surfaced as diagnostics.
inline constexpr double kEtaClamp = 35.0;

/// Floor applied to variance-function values so Pearson scaling stays
/// finite when a binomial mean saturates.
inline constexpr double kVarFloor = 1e-10;

/// Mean, mean derivative, and raw variance function evaluated over a block
/// of linear predictors (rows = longitudinal observations, cols = grid).
struct LinkEval {
  Eigen::ArrayXXd mu;
  Eigen::ArrayXXd dmu;   // d g^{-1}(eta) / d eta
  Eigen::ArrayXXd var;   // v(mu), dispersion excluded
  long clamped = 0;
};

LinkEval evaluate_link(const Family& family, const Eigen::ArrayXXd& eta);

// Scalar versions (tests, CV criterion).
double inv_link(const Family& family, double eta);
double inv_link_deriv(const Family& family, double eta);
double variance_fn(const Family& family, double mu);

/// Negative quasi-log-likelihood kernel for one observation:
/// gaussian (y-mu)^2/(2 phi); binomial -[y log mu + (1-y) log(1-mu)];
/// poisson mu - y log mu.
double quasi_nll(const Family& family, double y, double mu, double phi);

/// Unit deviance (GCV numerator).
double deviance_unit(const Family& family, double y, double mu);

/// (y - mu) / sqrt(v(mu)); dispersion excluded, variance floored.
Eigen::ArrayXXd pearson_residuals(const Family& family, const Eigen::ArrayXXd& y,
                                  const Eigen::ArrayXXd& mu);

/// phi = sum(e^2) / (n_obs - dof) for gaussian, floored at 1e-10; exactly 1
/// for binomial and poisson.
double estimate_dispersion(const Family& family, double sum_sq_pearson, long n_obs, int dof);

}  // namespace fgee
