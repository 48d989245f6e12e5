#include "fgee/simgen.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "fgee/errors.hpp"
#include "fgee/parallel.hpp"
#include "fgee/stats.hpp"

namespace fgee {

SimDesign SimDesign::gaussian_exchangeable(int N, int n_i, int L) {
  SimDesign d;
  d.kind = SimDesignKind::gaussian_exchangeable;
  d.N = N;
  d.n_i = n_i;
  d.L = L;
  return d;
}

SimDesign SimDesign::gaussian_exchangeable_variant(int N, int n_i, int L) {
  SimDesign d = gaussian_exchangeable(N, n_i, L);
  d.var_xi1 = 5.0;
  d.var_xi2 = 2.0;
  d.var_zeta1 = 3.0;
  d.var_zeta2 = 1.0;
  d.var_eps = 10.0;
  return d;
}

SimDesign SimDesign::gaussian_ar1(int N, int n_i, double rho, int L) {
  SimDesign d;
  d.kind = SimDesignKind::gaussian_ar1;
  d.N = N;
  d.n_i = n_i;
  d.L = L;
  d.rho = rho;
  return d;
}

SimDesign SimDesign::binary_ar1(int N, int n_i, double rho, int L) {
  SimDesign d;
  d.kind = SimDesignKind::binary_ar1;
  d.N = N;
  d.n_i = n_i;
  d.L = L;
  d.rho = rho;
  return d;
}

SimDesign SimDesign::parse(const std::string& preset, int N, int n_i, double rho, int L) {
  if (preset == "gaussian-exch") return gaussian_exchangeable(N, n_i, L);
  if (preset == "gaussian-exch-variant") return gaussian_exchangeable_variant(N, n_i, L);
  if (preset == "gaussian-ar1") return gaussian_ar1(N, n_i, rho, L);
  if (preset == "binary-ar1") return binary_ar1(N, n_i, rho, L);
  throw validation_error("unknown design preset '" + preset +
                         "' (expected gaussian-exch|gaussian-exch-variant|gaussian-ar1|binary-ar1)");
}

Family SimDesign::family() const {
  return kind == SimDesignKind::binary_ar1 ? Family::binomial() : Family::gaussian();
}

CorrStructure SimDesign::natural_structure() const {
  return kind == SimDesignKind::gaussian_exchangeable ? CorrStructure::exchangeable
                                                      : CorrStructure::ar1;
}

std::string SimDesign::name() const {
  switch (kind) {
    case SimDesignKind::gaussian_exchangeable:
      return var_eps > 5.0 ? "gaussian-exch-variant" : "gaussian-exch";
    case SimDesignKind::gaussian_ar1: return "gaussian-ar1";
    case SimDesignKind::binary_ar1: return "binary-ar1";
  }
  return "?";
}

Eigen::MatrixXd true_betas(const SimDesign& design, const Eigen::VectorXd& grid) {
  const int L = static_cast<int>(grid.size());
  Eigen::MatrixXd beta(L, 3);
  const double pi = M_PI;
  auto phi = [](double x) { return stats::norm_pdf(x); };
  for (int l = 0; l < L; ++l) {
    const double s = grid[l];
    switch (design.kind) {
      case SimDesignKind::gaussian_exchangeable:
        beta(l, 0) = 3.0 + std::sin(pi * s) + std::sqrt(2.0) * std::cos(3.0 * pi * s);
        beta(l, 1) = 3.0 + std::cos(2.0 * pi * s) + std::sqrt(2.0) * std::cos(3.0 * pi * s);
        beta(l, 2) = (1.0 / 60.0) * (phi((s - 0.2) / 0.01) + phi((s - 0.1) / 0.0049)) -
                     (1.0 / 200.0) * phi((s - 0.35) / 0.01) -
                     (1.0 / 250.0) * phi((s - 0.65) / 0.0036);
        break;
      case SimDesignKind::gaussian_ar1:
        beta(l, 0) = 3.0 + std::sin(pi * s) + std::sqrt(2.0) * std::cos(3.0 * pi * s);
        beta(l, 1) = 3.0 + std::cos(2.0 * pi * s) + std::sqrt(2.0) * std::cos(3.0 * pi * s);
        beta(l, 2) = 5.0 * phi((s - 0.35) / 0.1) - 5.0 * phi((s - 0.65) / 0.2);
        break;
      case SimDesignKind::binary_ar1:
        beta(l, 0) =
            1.0 + std::sin(pi * s) / 3.0 + std::sqrt(2.0) / 3.0 * std::cos(3.0 * pi * s);
        beta(l, 1) =
            1.0 + std::cos(2.0 * pi * s) / 3.0 + std::sqrt(2.0) / 3.0 * std::cos(3.0 * pi * s);
        beta(l, 2) = (5.0 / 3.0) * phi((s - 0.35) / 0.1) - (5.0 / 3.0) * phi((s - 0.65) / 0.2);
        break;
    }
  }
  return beta;
}

namespace {

/// Latent AR coefficient whose implied binary lag-1 correlation matches
/// `target` for thresholded margins (mu1, mu2). Newton on Plackett's
/// identity with a bisection safeguard; returns the fallback flag when the
/// target is infeasible for these margins.
double solve_latent_rho(double mu1, double mu2, double target, bool* infeasible) {
  const double lo_mu = 1e-7;
  mu1 = std::clamp(mu1, lo_mu, 1.0 - lo_mu);
  mu2 = std::clamp(mu2, lo_mu, 1.0 - lo_mu);
  const double z1 = stats::norm_quantile(mu1);
  const double z2 = stats::norm_quantile(mu2);
  const double denom = std::sqrt(mu1 * (1.0 - mu1) * mu2 * (1.0 - mu2));

  auto implied = [&](double r) {
    return (stats::bvn_cdf(z1, z2, r) - mu1 * mu2) / denom;
  };

  const double hi = 1.0 - 1e-7;
  if (implied(hi) < target) {
    if (infeasible) *infeasible = true;
    return hi;
  }
  if (infeasible) *infeasible = false;

  double lo = 0.0, up = hi;
  double r = std::clamp(target, lo, up);  // decent starting point
  for (int it = 0; it < 100; ++it) {
    const double f = implied(r) - target;
    if (std::abs(f) < 1e-9) return r;
    if (f > 0.0)
      up = r;
    else
      lo = r;
    // Newton step via the bivariate normal density, safeguarded by the
    // bracket.
    const double one_m = 1.0 - r * r;
    const double dens = std::exp(-(z1 * z1 - 2.0 * r * z1 * z2 + z2 * z2) / (2.0 * one_m)) /
                        (2.0 * M_PI * std::sqrt(one_m));
    double next = r - f * denom / std::max(dens, 1e-300);
    if (!(next > lo && next < up)) next = 0.5 * (lo + up);
    r = next;
  }
  return r;
}

struct Covariates {
  Eigen::VectorXd x1;  // per cluster (drawn one per cluster stream)
  Eigen::VectorXd x2;  // per observation within the cluster
};

Covariates draw_covariates(const SimDesign& design, std::mt19937_64& rng) {
  std::normal_distribution<double> gauss(0.0, 1.0);
  Covariates cov;
  cov.x1.resize(1);
  cov.x1[0] = gauss(rng);
  cov.x2.resize(design.n_i);
  double e = 0.0;  // e_{i,0} = 0
  for (int j = 0; j < design.n_i; ++j) {
    e = design.ar_coef_x2 * e + gauss(rng);
    cov.x2[j] = (j + 1) + e;
  }
  return cov;
}

}  // namespace

FunctionalDataset generate(const SimDesign& design, std::uint64_t seed, GenDiagnostics* diag,
                           int threads) {
  if (design.kind != SimDesignKind::gaussian_exchangeable) {
    if (design.rho < 0.0 || design.rho >= 1.0)
      throw validation_error("generate: AR1 rho must lie in [0,1)");
  }
  FunctionalDataset data;
  data.q = 2;
  data.grid = Eigen::VectorXd::LinSpaced(design.L, 0.0, 1.0);
  data.clusters.resize(design.N);
  const Eigen::MatrixXd beta = true_betas(design, data.grid);

  std::vector<long> fallbacks(design.N, 0);
  std::vector<double> latent_sum(design.N, 0.0);
  std::vector<long> latent_count(design.N, 0);

  parallel_for(design.N, threads, [&](std::size_t i) {
    std::mt19937_64 rng(stats::split_seed(seed, i));
    std::normal_distribution<double> gauss(0.0, 1.0);
    const int n = design.n_i;
    const int L = design.L;

    Cluster cluster;
    cluster.id = static_cast<long>(i) + 1;
    const Covariates cov = draw_covariates(design, rng);
    cluster.x.resize(2);
    cluster.x[0].scalar = Eigen::VectorXd::Constant(n, cov.x1[0]);
    cluster.x[1].scalar = cov.x2;
    cluster.y.resize(n, L);

    // Linear predictor eta_{j}(s_l).
    Eigen::MatrixXd eta(n, L);
    for (int j = 0; j < n; ++j)
      for (int l = 0; l < L; ++l)
        eta(j, l) = beta(l, 0) + cov.x1[0] * beta(l, 1) + cov.x2[j] * beta(l, 2);

    switch (design.kind) {
      case SimDesignKind::gaussian_exchangeable: {
        const double sd_xi1 = std::sqrt(design.var_xi1), sd_xi2 = std::sqrt(design.var_xi2);
        const double sd_z1 = std::sqrt(design.var_zeta1), sd_z2 = std::sqrt(design.var_zeta2);
        const double sd_eps = std::sqrt(design.var_eps);
        const double xi1 = sd_xi1 * gauss(rng);
        const double xi2 = sd_xi2 * gauss(rng);
        for (int j = 0; j < n; ++j) {
          const double z1 = sd_z1 * gauss(rng);
          const double z2 = sd_z2 * gauss(rng);
          for (int l = 0; l < L; ++l) {
            const double s = data.grid[l];
            const double psi2 = std::sqrt(2.0) * std::sin(2.0 * M_PI * s);
            cluster.y(j, l) =
                eta(j, l) + (xi1 + z1) + (xi2 + z2) * psi2 + sd_eps * gauss(rng);
          }
        }
        break;
      }
      case SimDesignKind::gaussian_ar1: {
        const double sd = std::sqrt(design.sigma2_ar1);
        const double inno = sd * std::sqrt(1.0 - design.rho * design.rho);
        for (int l = 0; l < L; ++l) {
          double e = sd * gauss(rng);
          cluster.y(0, l) = eta(0, l) + e;
          for (int j = 1; j < n; ++j) {
            e = design.rho * e + inno * gauss(rng);
            cluster.y(j, l) = eta(j, l) + e;
          }
        }
        break;
      }
      case SimDesignKind::binary_ar1: {
        // Latent standard AR1 series per grid point, thresholded at
        // Phi^{-1}(mu_j); the latent coefficient is matched pairwise to the
        // binary-scale target, falling back to the cluster-mean margin when
        // a pair is infeasible.
        Eigen::VectorXd mu(n), thresh(n);
        for (int l = 0; l < L; ++l) {
          double mu_bar = 0.0;
          for (int j = 0; j < n; ++j) {
            mu(j) = 1.0 / (1.0 + std::exp(-std::clamp(eta(j, l), -kEtaClamp, kEtaClamp)));
            mu_bar += mu(j);
            thresh(j) = stats::norm_quantile(std::clamp(mu(j), 1e-12, 1.0 - 1e-12));
          }
          mu_bar /= n;
          double rho_bar = -1.0;  // lazily solved cluster-mean fallback
          double z = gauss(rng);
          cluster.y(0, l) = z <= thresh(0) ? 1.0 : 0.0;
          for (int j = 1; j < n; ++j) {
            bool infeasible = false;
            double rho_z = design.rho == 0.0
                               ? 0.0
                               : solve_latent_rho(mu(j - 1), mu(j), design.rho, &infeasible);
            if (infeasible) {
              if (rho_bar < 0.0) {
                bool dummy = false;
                rho_bar = solve_latent_rho(mu_bar, mu_bar, design.rho, &dummy);
              }
              rho_z = rho_bar;
              ++fallbacks[i];
            }
            latent_sum[i] += rho_z;
            ++latent_count[i];
            z = rho_z * z + std::sqrt(1.0 - rho_z * rho_z) * gauss(rng);
            cluster.y(j, l) = z <= thresh(j) ? 1.0 : 0.0;
          }
        }
        break;
      }
    }
    data.clusters[i] = std::move(cluster);
  });

  if (diag) {
    long total_pairs = 0;
    double total_rho = 0.0;
    for (int i = 0; i < design.N; ++i) {
      diag->bisection_fallbacks += fallbacks[i];
      total_rho += latent_sum[i];
      total_pairs += latent_count[i];
    }
    diag->mean_latent_rho = total_pairs > 0 ? total_rho / total_pairs : 0.0;
  }
  return data;
}

MetricReport score_fit(const Eigen::MatrixXd& truth,
                       const std::vector<CoefficientBand>& bands) {
  const int L = static_cast<int>(truth.rows());
  const int R = static_cast<int>(bands.size());
  if (truth.cols() != R) throw validation_error("score_fit: coefficient count mismatch");
  MetricReport rep;
  double sq = 0.0;
  long pw_hits = 0;
  for (int r = 0; r < R; ++r) {
    if (bands[r].estimate.size() != L) throw validation_error("score_fit: grid mismatch");
    bool joint_ok = true;
    for (int l = 0; l < L; ++l) {
      const double err = truth(l, r) - bands[r].estimate[l];
      sq += err * err;
      if (truth(l, r) >= bands[r].pw_lo[l] && truth(l, r) <= bands[r].pw_hi[l]) ++pw_hits;
      if (!(truth(l, r) >= bands[r].joint_lo[l] && truth(l, r) <= bands[r].joint_hi[l]))
        joint_ok = false;
    }
    rep.joint_coverage += joint_ok ? 1.0 : 0.0;
  }
  rep.rmse = std::sqrt(sq / (static_cast<double>(R) * L));
  rep.pointwise_coverage = static_cast<double>(pw_hits) / (static_cast<double>(R) * L);
  rep.joint_coverage /= R;
  return rep;
}

}  // namespace fgee
