#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>

#include "fgee/dataset.hpp"
#include "fgee/glm.hpp"
#include "fgee/inference.hpp"
#include "fgee/workcov.hpp"

namespace fgee {

enum class SimDesignKind { gaussian_exchangeable, gaussian_ar1, binary_ar1 };

/// Seeded Monte Carlo designs: all use the three-coefficient mean model
/// with X1 per cluster ~ N(0,1) and X2 = j + AR(ar_coef_x2) noise per
/// observation, L grid points on [0,1].
struct SimDesign {
  SimDesignKind kind = SimDesignKind::gaussian_exchangeable;
  int N = 50;
  int n_i = 25;
  int L = 100;
  double rho = 0.5;             // AR1 designs: binary- or gaussian-scale lag-1 target
  double ar_coef_x2 = 0.7;
  // Gaussian exchangeable variance components (the cluster/observation
  // random-function scores and white noise).
  double var_xi1 = 3.0, var_xi2 = 2.0;
  double var_zeta1 = 1.5, var_zeta2 = 1.0;
  double var_eps = 1.5;
  // Gaussian AR1 noise variance.
  double sigma2_ar1 = 10.0;

  static SimDesign gaussian_exchangeable(int N, int n_i, int L = 100);
  /// Heavier-noise preset: xi (5,2), zeta (3,1), eps 10.
  static SimDesign gaussian_exchangeable_variant(int N, int n_i, int L = 100);
  static SimDesign gaussian_ar1(int N, int n_i, double rho, int L = 100);
  static SimDesign binary_ar1(int N, int n_i, double rho, int L = 100);
  static SimDesign parse(const std::string& preset, int N, int n_i, double rho, int L = 100);

  Family family() const;
  CorrStructure natural_structure() const;
  std::string name() const;
};

/// Closed-form coefficient functions of the design, L x 3.
Eigen::MatrixXd true_betas(const SimDesign& design, const Eigen::VectorXd& grid);

struct GenDiagnostics {
  long bisection_fallbacks = 0;   // pairs where the target correlation was infeasible
  double mean_latent_rho = 0.0;   // average latent AR coefficient used (binary design)
};

FunctionalDataset generate(const SimDesign& design, std::uint64_t seed,
                           GenDiagnostics* diag = nullptr, int threads = 1);

struct MetricReport {
  double rmse = 0.0;
  double pointwise_coverage = 0.0;
  double joint_coverage = 0.0;
  double fit_seconds = 0.0;
};

/// Per-replicate score: RMSE over all (r, s), mean pointwise indicator,
/// and the all-points joint indicator averaged over coefficients.
MetricReport score_fit(const Eigen::MatrixXd& truth,
                       const std::vector<CoefficientBand>& bands);

}  // namespace fgee
