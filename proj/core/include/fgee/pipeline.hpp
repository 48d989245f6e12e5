#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "fgee/dataset.hpp"
#include "fgee/inference.hpp"
#include "fgee/initial_fit.hpp"
#include "fgee/onestep.hpp"
#include "fgee/simgen.hpp"
#include "fgee/workcov.hpp"

namespace fgee {

/// Run configuration; fields mirror the CLI flags one to one and are
/// echoed verbatim into the output manifest.
struct RunConfig {
  std::string input_path;
  std::string output_dir = "fgee-output";
  std::string family = "gaussian";
  std::string structure = "exchangeable";
  int knots = 10;
  bool knots_count_basis = false;  // alternate reading of the knot count
  int degree = 3;
  int penalty_order = 1;
  int folds = 10;
  int bootstrap_reps = 1000;
  int band_reps = 1000;
  double alpha = 0.05;
  std::uint64_t seed = 1;
  int threads = 0;  // 0 = hardware concurrency
  std::string variance = "sandwich";  // sandwich | bootstrap
  std::string band = "parametric";    // parametric | nonparametric
  std::string cv = "fast";            // fast | standard
  std::string criterion = "nll";      // nll | mse
  double rho_eps = 1e-3;
  int rho_smooth_window = 0;  // 0/1 = off; odd window otherwise
  bool per_block_lambda0 = false;
  int lambda0_grid_size = 15;
  std::vector<double> stage1_grid, stage2_grid, stage3_grid;  // empty = defaults
  double fixed_lambda0 = -1.0;  // >= 0 skips GCV selection
  double fixed_lambda1 = -1.0;  // >= 0 skips CV tuning

  void validate() const;
  int resolved_threads() const;
};

struct StageTiming {
  double initial_fit = 0.0;
  double rho_pass1 = 0.0;
  double tuning = 0.0;
  double update = 0.0;  // summary precompute + one-step solve
  double rho_pass2 = 0.0;
  double variance = 0.0;
  double bands = 0.0;
  double total = 0.0;
};

struct FitWarnings {
  long eta_clamps = 0;
  long rho_truncations = 0;
  int jitter_fallbacks = 0;
  bool rho_all_singleton = false;
  bool bootstrap_rank_deficient = false;
  bool band_sigma_clipped = false;
  bool band_reps_too_few = false;
};

struct FitReport {
  Eigen::VectorXd grid;
  std::string estimator;  // onestep | fosr | gls
  std::string family, structure;
  int knots = 10, degree = 3, penalty_order = 1;
  bool knots_count_basis = false;
  Eigen::VectorXd theta0, theta1;
  Eigen::VectorXd lambda0, lambda1;
  std::vector<CoefficientBand> bands;
  Eigen::VectorXd rho_pass1, rho_pass2;
  std::vector<std::pair<double, double>> gcv_trace;
  TuneTrace tune_trace;
  double phi = 1.0;
  StageTiming timing;
  FitWarnings warnings;
};

/// Full one-step pipeline: initial fit, first correlation pass, Lambda_1
/// tuning, one-step update, second correlation pass, variance, bands.
FitReport run_fit(const FunctionalDataset& data, const RunConfig& config);

/// Initial working-independence fit with its own sandwich inference at
/// Lambda_0 (the FoSR benchmark).
FitReport run_fosr(const FunctionalDataset& data, const RunConfig& config);

/// Penalized GLS benchmark (gaussian only) with the configured structure.
FitReport run_gls(const FunctionalDataset& data, const RunConfig& config);

// --- output files ---------------------------------------------------------

/// Writes coefficients.csv, rho.csv, manifest.json, and one band plot SVG
/// per coefficient into config.output_dir.
void write_report(const FitReport& report, const RunConfig& config);

/// Re-emits plots from a previously written coefficients.csv.
void replot(const std::string& coefficients_csv, const std::string& output_dir);

// --- Monte Carlo benchmark harness ----------------------------------------

struct BenchmarkRow {
  std::string design;
  std::string estimator;
  int replicates = 0;
  double rmse_mean = 0.0, rmse_sem = 0.0;
  double ratio_mean = 0.0, ratio_sem = 0.0;  // per-replicate RMSE / FoSR RMSE
  double pointwise_mean = 0.0, pointwise_sem = 0.0;
  double joint_mean = 0.0, joint_sem = 0.0;
  double time_mean = 0.0, time_sem = 0.0;
};

/// Per-replicate metric matrix for one design (estimator-major), plus the
/// aggregated table rows.
struct BenchmarkResult {
  std::vector<BenchmarkRow> rows;
  std::vector<std::vector<MetricReport>> per_replicate;  // [estimator][replicate]
  std::vector<std::string> estimators;
};

/// Runs `replicates` seeded replicates of the design, fitting the one-step
/// (natural structure), the FoSR, and for gaussian designs the GLS
/// benchmarks.
BenchmarkResult run_design_benchmark(const SimDesign& design, int replicates,
                                     std::uint64_t seed, const RunConfig& base,
                                     std::ostream* progress = nullptr);

void write_benchmark_csv(const std::vector<BenchmarkRow>& rows, const std::string& path);

}  // namespace fgee
