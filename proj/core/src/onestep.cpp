#include "fgee/onestep.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <string>

#include "fgee/errors.hpp"
#include "fgee/parallel.hpp"
#include "fgee/stats.hpp"

namespace fgee {

PenalizedSolver::PenalizedSolver(const Eigen::MatrixXd& mean_W, const PenaltyMatrix& penalty,
                                 const Eigen::VectorXd& lambda) {
  Eigen::MatrixXd H = mean_W;
  penalty.add_scaled(lambda, 1.0, H);
  ldlt_.compute(H);
  if (ldlt_.info() == Eigen::Success && ldlt_.vectorD().minCoeff() > 0.0) return;

  jitter_used_ = true;
  const double jitter = 1e-10 * H.trace() / H.rows();
  H.diagonal().array() += jitter;
  ldlt_.compute(H);
  if (ldlt_.info() == Eigen::Success && ldlt_.vectorD().minCoeff() > 0.0) return;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H, Eigen::EigenvaluesOnly);
  throw numeric_error("penalized system is singular (smallest eigenvalue " +
                      std::to_string(es.eigenvalues().minCoeff()) +
                      "); a larger smoothing parameter may be needed");
}

Eigen::VectorXd onestep_update(const OneStepInputs& inputs, const Eigen::VectorXd& lambda1,
                               SolveDiagnostics* diag) {
  const ClusterSummaries& s = *inputs.summaries;
  const double N = s.N();
  PenalizedSolver solver(s.sumW / N, *inputs.penalty, lambda1);
  if (diag) diag->jitter_used = solver.jitter_used();
  const Eigen::VectorXd rhs =
      s.sumb / N - inputs.penalty->apply(lambda1, inputs.theta0);
  return inputs.theta0 + solver.solve(rhs);
}

Eigen::VectorXd gls_fit(const ModelContext& ctx, const WorkingCovModel& cov, double phi,
                        const Eigen::VectorXd& lambda, int threads, SolveDiagnostics* diag) {
  if (ctx.family.tag != FamilyTag::gaussian)
    throw validation_error("gls_fit: closed form requires the gaussian family");
  // At theta = 0 the summaries are exactly X'V^{-1}X and X'V^{-1}Y.
  const ClusterSummaries s =
      compute_cluster_summaries(ctx, Eigen::VectorXd::Zero(ctx.p()), cov, phi, threads);
  const double N = s.N();
  PenalizedSolver solver(s.sumW / N, ctx.penalty, lambda);
  if (diag) diag->jitter_used = solver.jitter_used();
  return solver.solve(s.sumb / N);
}

CvPlan CvPlan::make(int N, int K, std::uint64_t seed, CvCriterion criterion) {
  if (K < 1 || K > N) throw validation_error("cv: need 1 <= K <= N");
  CvPlan plan;
  plan.K = K;
  plan.criterion = criterion;
  std::vector<int> order(N);
  std::iota(order.begin(), order.end(), 0);
  std::mt19937_64 rng(stats::split_seed(seed, 0x9d5u));
  std::shuffle(order.begin(), order.end(), rng);
  plan.folds.resize(K);
  for (int i = 0; i < N; ++i) plan.folds[i % K].push_back(order[i]);
  return plan;
}

FoldSums FoldSums::make(const ClusterSummaries& s, const CvPlan& plan) {
  FoldSums sums;
  const int p = static_cast<int>(s.sumb.size());
  sums.W.assign(plan.K, Eigen::MatrixXd::Zero(p, p));
  sums.b.assign(plan.K, Eigen::VectorXd::Zero(p));
  sums.n.assign(plan.K, 0.0);
  for (int k = 0; k < plan.K; ++k) {
    for (int i : plan.folds[k]) {
      sums.W[k] += s.W[i];
      sums.b[k] += s.b[i];
      sums.n[k] += s.n_per_cluster[i];
    }
  }
  return sums;
}

Eigen::VectorXd fast_fold_estimate(const OneStepInputs& inputs, const Eigen::VectorXd& lambda1,
                                   const CvPlan& plan, const FoldSums& sums, int k,
                                   const PenalizedSolver& full_solver) {
  const ClusterSummaries& s = *inputs.summaries;
  const double N = s.N();
  const double held_in = N - static_cast<double>(plan.folds[k].size());
  if (held_in < 1.0) throw validation_error("cv: fold leaves no training clusters");
  const double n_tilde = s.total_n / (s.total_n - sums.n[k]);
  const Eigen::VectorXd rhs = (n_tilde / N) * (s.sumb - sums.b[k]) -
                              (held_in / N) * inputs.penalty->apply(lambda1, inputs.theta0);
  return inputs.theta0 + full_solver.solve(rhs);
}

Eigen::VectorXd standard_fold_estimate(const OneStepInputs& inputs,
                                       const Eigen::VectorXd& lambda1, const CvPlan& plan,
                                       const FoldSums& sums, int k, SolveDiagnostics* diag) {
  const ClusterSummaries& s = *inputs.summaries;
  const double M = s.N() - static_cast<double>(plan.folds[k].size());
  if (M < 1.0) throw validation_error("cv: fold leaves no training clusters");
  const double n_star = (s.total_n - sums.n[k]) / s.total_n;
  PenalizedSolver solver((s.sumW - sums.W[k]) / M, *inputs.penalty, n_star * lambda1);
  if (diag) diag->jitter_used = solver.jitter_used();
  const Eigen::VectorXd rhs = (s.sumb - sums.b[k]) / M -
                              n_star * inputs.penalty->apply(lambda1, inputs.theta0);
  return inputs.theta0 + solver.solve(rhs);
}

double cv_score(const ModelContext& ctx, const Eigen::VectorXd& theta_k,
                const std::vector<int>& heldout, CvCriterion criterion, double phi) {
  if (heldout.empty()) throw validation_error("cv_score: empty held-out set");
  const Eigen::MatrixXd curves = ctx.coefficient_curves(theta_k);
  double score = 0.0;
  for (int i : heldout) {
    const Cluster& cluster = ctx.data->clusters[i];
    const Eigen::ArrayXXd eta = ctx.linear_predictor(i, curves);
    const LinkEval link = evaluate_link(ctx.family, eta);
    for (Eigen::Index idx = 0; idx < link.mu.size(); ++idx) {
      const double y = cluster.y.array()(idx);
      const double mu = link.mu(idx);
      score += criterion == CvCriterion::nll ? quasi_nll(ctx.family, y, mu, phi)
                                             : (y - mu) * (y - mu);
    }
  }
  return score;
}

namespace {

double evaluate_lambda(const ModelContext& ctx, const OneStepInputs& inputs, const CvPlan& plan,
                       const FoldSums& sums, const Eigen::VectorXd& lambda, TuneMode mode,
                       double phi) {
  const ClusterSummaries& s = *inputs.summaries;
  const double N = s.N();
  PenalizedSolver full_solver(s.sumW / N, *inputs.penalty, lambda);
  double score = 0.0;
  for (int k = 0; k < plan.K; ++k) {
    Eigen::VectorXd theta_k;
    switch (mode) {
      case TuneMode::onestep_fast:
        theta_k = fast_fold_estimate(inputs, lambda, plan, sums, k, full_solver);
        break;
      case TuneMode::onestep_standard:
        theta_k = standard_fold_estimate(inputs, lambda, plan, sums, k);
        break;
      case TuneMode::gls: {
        // GLS closed form on the held-in clusters, rescaled to full-sample
        // size, with the full-sample factor reused across folds.
        const double n_tilde = s.total_n / (s.total_n - sums.n[k]);
        theta_k = full_solver.solve((n_tilde / N) * (s.sumb - sums.b[k]));
        break;
      }
    }
    score += cv_score(ctx, theta_k, plan.folds[k], plan.criterion, phi);
  }
  return score;
}

}  // namespace

Eigen::VectorXd sequential_tune(const ModelContext& ctx, const OneStepInputs& inputs,
                                const CvPlan& plan, const Eigen::VectorXd& lambda0,
                                TuneMode mode, double phi, int threads, const TuneGrids& grids,
                                TuneTrace* trace) {
  const int blocks = ctx.q() + 1;
  if (lambda0.size() != blocks) throw validation_error("sequential_tune: lambda0 size mismatch");
  const FoldSums sums = FoldSums::make(*inputs.summaries, plan);

  // Candidates are scored in parallel, then scanned in grid order; a later
  // candidate replaces the incumbent only when score <= best, which breaks
  // ties toward larger lambda.
  auto run_stage = [&](const std::vector<Eigen::VectorXd>& candidates,
                       int stage) -> Eigen::VectorXd {
    std::vector<double> scores(candidates.size());
    parallel_for(candidates.size(), threads, [&](std::size_t c) {
      scores[c] = evaluate_lambda(ctx, inputs, plan, sums, candidates[c], mode, phi);
    });
    int best = -1;
    double best_score = std::numeric_limits<double>::max();
    for (std::size_t c = 0; c < candidates.size(); ++c) {
      if (trace) trace->entries.push_back({candidates[c], scores[c], stage});
      if (scores[c] <= best_score) {
        best_score = scores[c];
        best = static_cast<int>(c);
      }
    }
    return candidates[best];
  };

  // Stage 1: shared multiplier on Lambda_0.
  std::vector<Eigen::VectorXd> stage1;
  std::vector<double> mult1 = grids.stage1;
  std::sort(mult1.begin(), mult1.end());
  for (double a : mult1) stage1.push_back(a * lambda0);
  Eigen::VectorXd best = run_stage(stage1, 1);

  // Stage 2: all per-block combinations of the stage-2 multipliers around
  // the stage-1 winner.
  auto expand = [&](const Eigen::VectorXd& center,
                    const std::vector<double>& mults) -> std::vector<Eigen::VectorXd> {
    std::vector<double> ms = mults;
    std::sort(ms.begin(), ms.end());
    const std::size_t total = static_cast<std::size_t>(std::pow(ms.size(), blocks));
    std::vector<Eigen::VectorXd> out;
    out.reserve(total);
    for (std::size_t code = 0; code < total; ++code) {
      Eigen::VectorXd lambda(blocks);
      std::size_t rem = code;
      for (int r = blocks - 1; r >= 0; --r) {
        lambda[r] = center[r] * ms[rem % ms.size()];
        rem /= ms.size();
      }
      out.push_back(lambda);
    }
    return out;
  };
  best = run_stage(expand(best, grids.stage2), 2);
  best = run_stage(expand(best, grids.stage3), 3);
  return best;
}

}  // namespace fgee
