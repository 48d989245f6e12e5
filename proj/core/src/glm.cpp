#include "fgee/glm.hpp"

#include <algorithm>
#include <cmath>

#include "fgee/errors.hpp"

namespace fgee {

Family Family::parse(const std::string& name) {
  if (name == "gaussian") return gaussian();
  if (name == "binomial") return binomial();
  if (name == "poisson") return poisson();
  throw validation_error("unknown family '" + name + "' (expected gaussian|binomial|poisson)");
}

std::string Family::name() const {
  switch (tag) {
    case FamilyTag::gaussian: return "gaussian";
    case FamilyTag::binomial: return "binomial";
    case FamilyTag::poisson: return "poisson";
  }
  return "?";
}

namespace {

inline double clamp_eta(double eta, long& clamped) {
  if (eta > kEtaClamp) {
    ++clamped;
    return kEtaClamp;
  }
  if (eta < -kEtaClamp) {
    ++clamped;
    return -kEtaClamp;
  }
  return eta;
}

}  // namespace

LinkEval evaluate_link(const Family& family, const Eigen::ArrayXXd& eta) {
  LinkEval out;
  out.mu.resizeLike(eta);
  out.dmu.resizeLike(eta);
  out.var.resizeLike(eta);
  const auto n = eta.size();
  switch (family.tag) {
    case FamilyTag::gaussian:
      out.mu = eta;
      out.dmu.setOnes();
      out.var.setOnes();
      break;
    case FamilyTag::binomial:
      for (Eigen::Index i = 0; i < n; ++i) {
        const double e = clamp_eta(eta(i), out.clamped);
        const double mu = 1.0 / (1.0 + std::exp(-e));
        out.mu(i) = mu;
        out.dmu(i) = mu * (1.0 - mu);
        out.var(i) = std::max(mu * (1.0 - mu), kVarFloor);
      }
      break;
    case FamilyTag::poisson:
      for (Eigen::Index i = 0; i < n; ++i) {
        const double e = clamp_eta(eta(i), out.clamped);
        const double mu = std::exp(e);
        out.mu(i) = mu;
        out.dmu(i) = mu;
        out.var(i) = std::max(mu, kVarFloor);
      }
      break;
  }
  return out;
}

double inv_link(const Family& family, double eta) {
  long c = 0;
  switch (family.tag) {
    case FamilyTag::gaussian: return eta;
    case FamilyTag::binomial: return 1.0 / (1.0 + std::exp(-clamp_eta(eta, c)));
    case FamilyTag::poisson: return std::exp(clamp_eta(eta, c));
  }
  return eta;
}

double inv_link_deriv(const Family& family, double eta) {
  switch (family.tag) {
    case FamilyTag::gaussian: return 1.0;
    case FamilyTag::binomial: {
      const double mu = inv_link(family, eta);
      return mu * (1.0 - mu);
    }
    case FamilyTag::poisson: return inv_link(family, eta);
  }
  return 1.0;
}

double variance_fn(const Family& family, double mu) {
  switch (family.tag) {
    case FamilyTag::gaussian: return 1.0;
    case FamilyTag::binomial: return std::max(mu * (1.0 - mu), kVarFloor);
    case FamilyTag::poisson: return std::max(mu, kVarFloor);
  }
  return 1.0;
}

double quasi_nll(const Family& family, double y, double mu, double phi) {
  switch (family.tag) {
    case FamilyTag::gaussian: {
      const double r = y - mu;
      return r * r / (2.0 * phi);
    }
    case FamilyTag::binomial: {
      const double m = std::clamp(mu, kVarFloor, 1.0 - kVarFloor);
      return -(y * std::log(m) + (1.0 - y) * std::log(1.0 - m));
    }
    case FamilyTag::poisson: {
      const double m = std::max(mu, kVarFloor);
      return m - y * std::log(m);
    }
  }
  return 0.0;
}

double deviance_unit(const Family& family, double y, double mu) {
  switch (family.tag) {
    case FamilyTag::gaussian: {
      const double r = y - mu;
      return r * r;
    }
    case FamilyTag::binomial: {
      const double m = std::clamp(mu, kVarFloor, 1.0 - kVarFloor);
      double d = 0.0;
      if (y > 0.0) d += y * std::log(y / m);
      if (y < 1.0) d += (1.0 - y) * std::log((1.0 - y) / (1.0 - m));
      return 2.0 * d;
    }
    case FamilyTag::poisson: {
      const double m = std::max(mu, kVarFloor);
      double d = m - y;
      if (y > 0.0) d += y * std::log(y / m);
      return 2.0 * d;
    }
  }
  return 0.0;
}

Eigen::ArrayXXd pearson_residuals(const Family& family, const Eigen::ArrayXXd& y,
                                  const Eigen::ArrayXXd& mu) {
  if (y.rows() != mu.rows() || y.cols() != mu.cols())
    throw validation_error("pearson_residuals: shape mismatch");
  Eigen::ArrayXXd e(y.rows(), y.cols());
  for (Eigen::Index i = 0; i < y.size(); ++i) {
    const double v = std::max(variance_fn(family, mu(i)), kVarFloor);
    e(i) = (y(i) - mu(i)) / std::sqrt(v);
  }
  return e;
}

double estimate_dispersion(const Family& family, double sum_sq_pearson, long n_obs, int dof) {
  if (family.fixed_dispersion()) return 1.0;
  if (n_obs <= dof) throw validation_error("estimate_dispersion: n_obs <= dof");
  return std::max(sum_sq_pearson / static_cast<double>(n_obs - dof), 1e-10);
}

}  // namespace fgee
