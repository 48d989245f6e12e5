#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "fgee/model.hpp"
#include "fgee/workcov.hpp"

namespace fgee {

/// Everything the one-step update and its resampling variants consume:
/// the initial estimate plus per-cluster W_i / b_i precomputed at it.
struct OneStepInputs {
  Eigen::VectorXd theta0;
  const ClusterSummaries* summaries = nullptr;
  const PenaltyMatrix* penalty = nullptr;

  int N() const { return summaries->N(); }
};

struct SolveDiagnostics {
  bool jitter_used = false;
};

/// LDLT of (1/N) sum W_i + Lambda S with a one-shot jitter retry
/// (+1e-10 * trace/p on the diagonal) for near-singular systems.
class PenalizedSolver {
 public:
  PenalizedSolver(const Eigen::MatrixXd& mean_W, const PenaltyMatrix& penalty,
                  const Eigen::VectorXd& lambda);
  template <typename Derived>
  auto solve(const Eigen::MatrixBase<Derived>& rhs) const {
    return ldlt_.solve(rhs).eval();
  }
  bool jitter_used() const { return jitter_used_; }

 private:
  Eigen::LDLT<Eigen::MatrixXd> ldlt_;
  bool jitter_used_ = false;
};

/// theta1 = theta0 + [ (1/N) sum W_i + Lambda S ]^{-1}
///                   (1/N) sum { b_i - Lambda S theta0 }.
Eigen::VectorXd onestep_update(const OneStepInputs& inputs, const Eigen::VectorXd& lambda1,
                               SolveDiagnostics* diag = nullptr);

/// Penalized GLS, gaussian only:
/// theta = [ sum X' V^{-1} X + N Lambda S ]^{-1} sum X' V^{-1} Y,
/// computed with the structured solvers.
Eigen::VectorXd gls_fit(const ModelContext& ctx, const WorkingCovModel& cov, double phi,
                        const Eigen::VectorXd& lambda, int threads,
                        SolveDiagnostics* diag = nullptr);

enum class CvCriterion { nll, mse };

struct CvPlan {
  int K = 10;
  std::vector<std::vector<int>> folds;  // held-out cluster indices
  CvCriterion criterion = CvCriterion::nll;

  /// Clusters are shuffled with the seeded RNG and dealt round-robin, so
  /// folds are balanced in cluster count.
  static CvPlan make(int N, int K, std::uint64_t seed,
                     CvCriterion criterion = CvCriterion::nll);
};

/// Per-fold partial sums of the cluster summaries.
struct FoldSums {
  std::vector<Eigen::MatrixXd> W;
  std::vector<Eigen::VectorXd> b;
  std::vector<double> n;

  static FoldSums make(const ClusterSummaries& s, const CvPlan& plan);
};

/// Fast variant: reuses the full-sample factor across folds.
Eigen::VectorXd fast_fold_estimate(const OneStepInputs& inputs, const Eigen::VectorXd& lambda1,
                                   const CvPlan& plan, const FoldSums& sums, int k,
                                   const PenalizedSolver& full_solver);

/// Standard variant: fold-specific bracket, refactored per (k, lambda).
Eigen::VectorXd standard_fold_estimate(const OneStepInputs& inputs,
                                       const Eigen::VectorXd& lambda1, const CvPlan& plan,
                                       const FoldSums& sums, int k,
                                       SolveDiagnostics* diag = nullptr);

/// Held-out criterion at theta_k, summed over the fold's clusters.
double cv_score(const ModelContext& ctx, const Eigen::VectorXd& theta_k,
                const std::vector<int>& heldout, CvCriterion criterion, double phi);

enum class TuneMode {
  onestep_fast,      // Eq.-style fold estimates with the shared factor
  onestep_standard,  // fold-specific Hessians
  gls                // GLS closed form per fold (gaussian benchmarks)
};

struct TuneTrace {
  struct Entry {
    Eigen::VectorXd lambda;
    double score;
    int stage;
  };
  std::vector<Entry> entries;
};

struct TuneGrids {
  std::vector<double> stage1 = {0.001, 0.01, 0.1, 1.0, 10.0, 100.0, 1000.0};
  std::vector<double> stage2 = {0.001, 0.01, 0.1, 1.0, 10.0, 100.0, 1000.0};
  std::vector<double> stage3 = {0.2, 0.5, 1.0, 2.0, 5.0};
};

/// Three-stage sequential CV search for Lambda_1 seeded at Lambda_0:
/// shared multipliers first, then per-block order-of-magnitude combinations
/// around the stage-1 winner, then a local per-block refinement. Ties break
/// toward the smoother (larger) lambda.
Eigen::VectorXd sequential_tune(const ModelContext& ctx, const OneStepInputs& inputs,
                                const CvPlan& plan, const Eigen::VectorXd& lambda0,
                                TuneMode mode, double phi, int threads,
                                const TuneGrids& grids = {}, TuneTrace* trace = nullptr);

}  // namespace fgee
