#include "fgee/inference.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "fgee/errors.hpp"
#include "fgee/parallel.hpp"
#include "fgee/stats.hpp"

namespace fgee {

ThetaCovariance sandwich_variance(const ModelContext& ctx, const Eigen::VectorXd& theta,
                                  const WorkingCovModel& cov, double phi,
                                  const Eigen::VectorXd& lambda, int threads,
                                  SolveDiagnostics* diag) {
  const ClusterSummaries s = compute_cluster_summaries(ctx, theta, cov, phi, threads);
  const double N = s.N();
  const Eigen::VectorXd penalty_term = ctx.penalty.apply(lambda, theta);

  Eigen::MatrixXd M = Eigen::MatrixXd::Zero(ctx.p(), ctx.p());
  for (int i = 0; i < s.N(); ++i) {
    const Eigen::VectorXd u = s.b[i] - penalty_term;
    M.noalias() += u * u.transpose();
  }
  M /= N;

  PenalizedSolver solver(s.sumW / N, ctx.penalty, lambda);
  if (diag) diag->jitter_used = solver.jitter_used();
  const Eigen::MatrixXd HinvM = solver.solve(M);
  Eigen::MatrixXd V = solver.solve(HinvM.transpose()).transpose() / N;
  V = 0.5 * (V + V.transpose()).eval();

  ThetaCovariance out;
  out.cov = std::move(V);
  out.source = ThetaCovariance::Source::sandwich;
  return out;
}

ThetaCovariance fast_cluster_bootstrap(const OneStepInputs& inputs,
                                       const Eigen::VectorXd& lambda1, int T,
                                       std::uint64_t seed, int threads,
                                       std::vector<Eigen::VectorXd>* draws,
                                       SolveDiagnostics* diag) {
  if (T < 2) throw validation_error("fast_cluster_bootstrap: need T >= 2");
  const ClusterSummaries& s = *inputs.summaries;
  const int N = s.N();
  const int p = static_cast<int>(s.sumb.size());
  PenalizedSolver solver(s.sumW / static_cast<double>(N), *inputs.penalty, lambda1);
  if (diag) diag->jitter_used = solver.jitter_used();
  const Eigen::VectorXd penalty_term = inputs.penalty->apply(lambda1, inputs.theta0);

  std::vector<Eigen::VectorXd> theta_t(T);
  parallel_for(T, threads, [&](std::size_t t) {
    std::mt19937_64 rng(stats::split_seed(seed, t));
    std::uniform_int_distribution<int> pick(0, N - 1);
    Eigen::VectorXd sum_b = Eigen::VectorXd::Zero(p);
    double n_t = 0.0;
    for (int d = 0; d < N; ++d) {
      const int i = pick(rng);
      sum_b += s.b[i];
      n_t += s.n_per_cluster[i];
    }
    const double n_tilde = s.total_n / n_t;
    const Eigen::VectorXd rhs = (n_tilde / N) * sum_b - penalty_term;
    theta_t[t] = inputs.theta0 + solver.solve(rhs);
  });

  Eigen::VectorXd mean = Eigen::VectorXd::Zero(p);
  for (const auto& th : theta_t) mean += th;
  mean /= T;
  Eigen::MatrixXd cov = Eigen::MatrixXd::Zero(p, p);
  for (const auto& th : theta_t) {
    const Eigen::VectorXd d = th - mean;
    cov.noalias() += d * d.transpose();
  }
  cov /= (T - 1);

  ThetaCovariance out;
  out.cov = std::move(cov);
  out.source = ThetaCovariance::Source::fast_bootstrap;
  out.boot_reps = T;
  {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(out.cov, Eigen::EigenvaluesOnly);
    const double top = es.eigenvalues().maxCoeff();
    out.rank_deficient = !(top > 0.0) || es.eigenvalues().minCoeff() <= top * 1e-14;
  }
  if (draws) *draws = std::move(theta_t);
  return out;
}

std::vector<Eigen::MatrixXd> beta_covariance(const Eigen::MatrixXd& theta_cov,
                                             const BasisMatrix& basis, int q) {
  const int m = basis.num_basis();
  if (theta_cov.rows() != m * (q + 1) || theta_cov.cols() != m * (q + 1))
    throw validation_error("beta_covariance: covariance dimension mismatch");
  std::vector<Eigen::MatrixXd> out;
  out.reserve(q + 1);
  for (int r = 0; r <= q; ++r) {
    const auto block = theta_cov.block(r * m, r * m, m, m);
    out.push_back(basis.values * block * basis.values.transpose());
  }
  return out;
}

Eigen::MatrixXd beta_standard_errors(const Eigen::MatrixXd& theta_cov, const BasisMatrix& basis,
                                     int q) {
  const int m = basis.num_basis();
  const int L = basis.num_points();
  Eigen::MatrixXd se(L, q + 1);
  for (int r = 0; r <= q; ++r) {
    const auto block = theta_cov.block(r * m, r * m, m, m);
    for (int l = 0; l < L; ++l) {
      const Eigen::VectorXd row = basis.values.row(l).transpose();
      se(l, r) = std::sqrt(std::max(row.dot(block * row), 0.0));
    }
  }
  return se;
}

double max_t_quantile_parametric(const Eigen::MatrixXd& sigma_theta, double alpha, int T,
                                 std::uint64_t seed, bool* clipped) {
  const int m = static_cast<int>(sigma_theta.rows());
  if (sigma_theta.cols() != m) throw validation_error("max_t_quantile: matrix must be square");
  if (T < 100) throw validation_error("max_t_quantile: need T >= 100");

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sigma_theta);
  if (es.info() != Eigen::Success) throw numeric_error("max_t_quantile: eigendecomposition failed");
  Eigen::VectorXd evals = es.eigenvalues();
  bool any_clip = false;
  for (int d = 0; d < m; ++d) {
    if (evals[d] < 0.0) {
      evals[d] = 0.0;
      any_clip = true;
    }
  }
  if (clipped) *clipped = any_clip;
  const Eigen::MatrixXd factor = es.eigenvectors() * evals.cwiseSqrt().asDiagonal();

  Eigen::VectorXd inv_sd(m);
  for (int d = 0; d < m; ++d) {
    const double sd = std::sqrt(std::max(sigma_theta(d, d), 0.0));
    inv_sd[d] = sd > 0.0 ? 1.0 / sd : 0.0;  // degenerate coordinates drop out
  }

  std::mt19937_64 rng(stats::split_seed(seed, 0xba9d));
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::vector<double> stat(T);
  Eigen::VectorXd z(m);
  for (int t = 0; t < T; ++t) {
    for (int d = 0; d < m; ++d) z[d] = gauss(rng);
    const Eigen::VectorXd draw = factor * z;
    stat[t] = (draw.array().abs() * inv_sd.array()).maxCoeff();
  }
  return stats::empirical_quantile(stat, 1.0 - alpha);
}

double max_t_quantile_draws(const std::vector<Eigen::VectorXd>& draws, double alpha,
                            bool* too_few) {
  if (draws.empty()) throw validation_error("max_t_quantile_draws: no draws");
  const int T = static_cast<int>(draws.size());
  const int m = static_cast<int>(draws.front().size());

  Eigen::VectorXd mean = Eigen::VectorXd::Zero(m);
  for (const auto& d : draws) mean += d;
  mean /= T;
  Eigen::VectorXd var = Eigen::VectorXd::Zero(m);
  for (const auto& d : draws) var += (d - mean).cwiseAbs2();
  var /= std::max(T - 1, 1);
  Eigen::VectorXd inv_sd(m);
  for (int d = 0; d < m; ++d) inv_sd[d] = var[d] > 0.0 ? 1.0 / std::sqrt(var[d]) : 0.0;

  std::vector<double> stat(T);
  for (int t = 0; t < T; ++t)
    stat[t] = ((draws[t] - mean).array().abs() * inv_sd.array()).maxCoeff();

  const bool insufficient = static_cast<double>(T) < 1.0 / alpha;
  if (too_few) *too_few = insufficient;
  if (insufficient) return *std::max_element(stat.begin(), stat.end());
  return stats::empirical_quantile(stat, 1.0 - alpha);
}

std::pair<Eigen::VectorXd, Eigen::VectorXd> pointwise_band(const Eigen::VectorXd& beta,
                                                           const Eigen::VectorXd& se,
                                                           double alpha) {
  if (beta.size() != se.size()) throw validation_error("pointwise_band: shape mismatch");
  if (se.minCoeff() < 0.0) throw validation_error("pointwise_band: negative standard error");
  const double z = stats::norm_quantile(1.0 - alpha / 2.0);
  return {beta - z * se, beta + z * se};
}

CoefficientBand make_band(const Eigen::VectorXd& beta, const Eigen::VectorXd& se, double q_joint,
                          double alpha) {
  CoefficientBand band;
  band.estimate = beta;
  band.se = se;
  band.alpha = alpha;
  // The joint band must contain the pointwise band at every point.
  band.q_joint = std::max(q_joint, stats::norm_quantile(1.0 - alpha / 2.0));
  q_joint = band.q_joint;
  std::tie(band.pw_lo, band.pw_hi) = pointwise_band(beta, se, alpha);
  band.joint_lo = beta - q_joint * se;
  band.joint_hi = beta + q_joint * se;
  return band;
}

}  // namespace fgee
