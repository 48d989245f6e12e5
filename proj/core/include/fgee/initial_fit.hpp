#pragma once

#include <Eigen/Dense>
#include <utility>
#include <vector>

#include "fgee/model.hpp"

namespace fgee {

/// Working-independence penalized fit (the initial estimator seeding the
/// one-step), with Lambda_0 chosen by GCV. All smoothing parameters are on
/// the averaged per-cluster scale: the normal equations solved internally
/// are [sum_i X_i' W X_i + N Lambda S] theta = sum_i X_i' W z.
struct InitialFit {
  Eigen::VectorXd theta0;
  Eigen::VectorXd lambda0;  // one scalar per coefficient block
  std::vector<std::pair<double, double>> gcv_trace;  // (shared lambda, score)
  bool converged = false;
  int iterations = 0;
  double deviance = 0.0;
  double phi = 1.0;
  long eta_clamps = 0;
};

struct PirlsResult {
  Eigen::VectorXd theta;
  bool converged = false;
  int iterations = 0;
  double deviance = 0.0;
  double hat_trace = 0.0;
  long eta_clamps = 0;
};

/// Penalized IRLS with working weights dmu^2 / v(mu); stops when
/// max |delta theta| < 1e-8 or after 50 iterations. Throws numeric_error on
/// a singular penalized system (naming the offending coefficient block) or
/// when the deviance increases five consecutive iterations.
PirlsResult pirls_fit(const ModelContext& ctx, const Eigen::VectorXd& lambda0, int threads,
                      const Eigen::VectorXd* warm_start = nullptr);

/// GCV(lambda) = n * deviance / (n - tr(Hat))^2 over a log-spaced grid of
/// `grid_size` points spanning [1e-4, 1e4] around the data-driven scale
/// lambda_ref = tr(sum X'WX) / tr(S). A shared lambda is searched first;
/// when per_block_refine is set, each block is then refined on a local
/// 5-point grid.
InitialFit select_lambda0(const ModelContext& ctx, int grid_size, bool per_block_refine,
                          int threads, const std::vector<double>* grid_override = nullptr);

}  // namespace fgee
