#include "fgee/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <ostream>

#include "fgee/errors.hpp"
#include "fgee/parallel.hpp"
#include "fgee/stats.hpp"

namespace fgee {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(const Clock::time_point& t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

TuneGrids grids_from_config(const RunConfig& config) {
  TuneGrids grids;
  if (!config.stage1_grid.empty()) grids.stage1 = config.stage1_grid;
  if (!config.stage2_grid.empty()) grids.stage2 = config.stage2_grid;
  if (!config.stage3_grid.empty()) grids.stage3 = config.stage3_grid;
  return grids;
}

InitialFit compute_initial(const ModelContext& ctx, const RunConfig& config, int threads) {
  if (config.fixed_lambda0 >= 0.0) {
    InitialFit init;
    init.lambda0 = Eigen::VectorXd::Constant(ctx.q() + 1, config.fixed_lambda0);
    PirlsResult fit = pirls_fit(ctx, init.lambda0, threads);
    init.theta0 = fit.theta;
    init.converged = fit.converged;
    init.iterations = fit.iterations;
    init.deviance = fit.deviance;
    init.eta_clamps = fit.eta_clamps;
    const Eigen::MatrixXd curves = ctx.coefficient_curves(init.theta0);
    double pearson_sq = 0.0;
    for (int i = 0; i < ctx.N(); ++i) {
      const LinkEval link = evaluate_link(ctx.family, ctx.linear_predictor(i, curves));
      pearson_sq += pearson_residuals(ctx.family, ctx.data->clusters[i].y.array(), link.mu)
                        .matrix()
                        .squaredNorm();
    }
    init.phi = estimate_dispersion(ctx.family, pearson_sq, ctx.data->total_values(), ctx.p());
    return init;
  }
  return select_lambda0(ctx, config.lambda0_grid_size, config.per_block_lambda0, threads);
}

void fill_meta(FitReport& rep, const RunConfig& config, const ModelContext& ctx) {
  rep.grid = ctx.basis.grid;
  rep.family = config.family;
  rep.structure = config.structure;
  rep.knots = config.knots;
  rep.degree = config.degree;
  rep.penalty_order = config.penalty_order;
  rep.knots_count_basis = config.knots_count_basis;
}

/// Bands for every coefficient block from a theta covariance (parametric)
/// or bootstrap draws (nonparametric).
std::vector<CoefficientBand> build_bands(const ModelContext& ctx, const Eigen::VectorXd& theta,
                                         const Eigen::MatrixXd& theta_cov,
                                         const std::vector<Eigen::VectorXd>* draws,
                                         const RunConfig& config, FitWarnings& warnings) {
  const int m = ctx.m();
  const Eigen::MatrixXd curves = ctx.coefficient_curves(theta);
  const Eigen::MatrixXd se = beta_standard_errors(theta_cov, ctx.basis, ctx.q());
  std::vector<CoefficientBand> bands;
  bands.reserve(ctx.q() + 1);
  for (int r = 0; r <= ctx.q(); ++r) {
    double q_joint;
    if (draws) {
      std::vector<Eigen::VectorXd> block_draws;
      block_draws.reserve(draws->size());
      for (const auto& d : *draws) block_draws.push_back(d.segment(r * m, m));
      bool too_few = false;
      q_joint = max_t_quantile_draws(block_draws, config.alpha, &too_few);
      warnings.band_reps_too_few = warnings.band_reps_too_few || too_few;
    } else {
      bool clipped = false;
      q_joint = max_t_quantile_parametric(theta_cov.block(r * m, r * m, m, m), config.alpha,
                                          config.band_reps,
                                          stats::split_seed(config.seed, 1000 + r), &clipped);
      warnings.band_sigma_clipped = warnings.band_sigma_clipped || clipped;
    }
    // Full basis-expanded estimate for block r (dense, not the band view).
    const Eigen::VectorXd beta_r = ctx.basis.values * theta.segment(r * m, m);
    (void)curves;
    bands.push_back(make_band(beta_r, se.col(r), q_joint, config.alpha));
  }
  return bands;
}

}  // namespace

void RunConfig::validate() const {
  Family::parse(family);
  parse_structure(structure);
  if (variance != "sandwich" && variance != "bootstrap")
    throw validation_error("variance must be sandwich|bootstrap");
  if (band != "parametric" && band != "nonparametric")
    throw validation_error("band must be parametric|nonparametric");
  if (cv != "fast" && cv != "standard") throw validation_error("cv must be fast|standard");
  if (criterion != "nll" && criterion != "mse")
    throw validation_error("criterion must be nll|mse");
  if (!(alpha > 0.0 && alpha < 1.0)) throw validation_error("alpha must lie in (0,1)");
  if (knots < 1) throw validation_error("knots must be positive");
  if (degree < 0) throw validation_error("degree must be >= 0");
  if (knots_count_basis && knots <= degree + 1)
    throw validation_error("knots interpreted as the basis dimension must exceed degree+1");
  if (penalty_order < 1) throw validation_error("penalty order must be >= 1");
  if (folds < 2) throw validation_error("folds must be >= 2");
  if (bootstrap_reps < 2) throw validation_error("bootstrap reps must be >= 2");
  if (band_reps < 100) throw validation_error("band reps must be >= 100");
  if (rho_smooth_window > 1 && rho_smooth_window % 2 == 0)
    throw validation_error("rho smoothing window must be odd");
  if (!(rho_eps > 0.0 && rho_eps < 0.5)) throw validation_error("rho eps must lie in (0, 0.5)");
  if (lambda0_grid_size < 2) throw validation_error("lambda0 grid needs >= 2 points");
}

int RunConfig::resolved_threads() const {
  return threads > 0 ? threads : default_thread_count();
}

FitReport run_fit(const FunctionalDataset& data, const RunConfig& config) {
  config.validate();
  const auto t_total = Clock::now();
  const int threads = config.resolved_threads();
  const Family family = Family::parse(config.family);
  const CorrStructure structure = parse_structure(config.structure);
  const BasisSpec spec = BasisSpec::from_knot_count(config.knots, config.knots_count_basis,
                                                    config.degree, config.penalty_order);
  const ModelContext ctx = make_context(data, spec, family);

  FitReport rep;
  rep.estimator = "onestep";
  fill_meta(rep, config, ctx);

  auto t0 = Clock::now();
  const InitialFit init = compute_initial(ctx, config, threads);
  rep.timing.initial_fit = seconds_since(t0);
  rep.theta0 = init.theta0;
  rep.lambda0 = init.lambda0;
  rep.gcv_trace = init.gcv_trace;
  rep.warnings.eta_clamps += init.eta_clamps;

  t0 = Clock::now();
  const WorkCovEstimate wc1 = estimate_working_cov(ctx, init.theta0, structure, config.rho_eps,
                                                   config.rho_smooth_window, threads);
  rep.timing.rho_pass1 = seconds_since(t0);
  rep.rho_pass1 = wc1.model.rho;
  rep.phi = wc1.phi;
  rep.warnings.eta_clamps += wc1.eta_clamps;
  rep.warnings.rho_truncations += wc1.truncations;
  rep.warnings.rho_all_singleton = wc1.model.singleton_warning;

  t0 = Clock::now();
  const ClusterSummaries summaries =
      compute_cluster_summaries(ctx, init.theta0, wc1.model, wc1.phi, threads);
  double update_seconds = seconds_since(t0);
  rep.warnings.eta_clamps += summaries.eta_clamps;
  const OneStepInputs inputs{init.theta0, &summaries, &ctx.penalty};

  t0 = Clock::now();
  Eigen::VectorXd lambda1;
  if (config.fixed_lambda1 >= 0.0) {
    lambda1 = Eigen::VectorXd::Constant(ctx.q() + 1, config.fixed_lambda1);
  } else {
    const CvPlan plan =
        CvPlan::make(ctx.N(), config.folds, config.seed,
                     config.criterion == "nll" ? CvCriterion::nll : CvCriterion::mse);
    const TuneMode mode =
        config.cv == "fast" ? TuneMode::onestep_fast : TuneMode::onestep_standard;
    lambda1 = sequential_tune(ctx, inputs, plan, init.lambda0, mode, wc1.phi, threads,
                              grids_from_config(config), &rep.tune_trace);
  }
  rep.timing.tuning = seconds_since(t0);
  rep.lambda1 = lambda1;

  t0 = Clock::now();
  SolveDiagnostics update_diag;
  rep.theta1 = onestep_update(inputs, lambda1, &update_diag);
  update_seconds += seconds_since(t0);
  rep.timing.update = update_seconds;
  rep.warnings.jitter_fallbacks += update_diag.jitter_used ? 1 : 0;

  t0 = Clock::now();
  const WorkCovEstimate wc2 = estimate_working_cov(ctx, rep.theta1, structure, config.rho_eps,
                                                   config.rho_smooth_window, threads);
  rep.timing.rho_pass2 = seconds_since(t0);
  rep.rho_pass2 = wc2.model.rho;
  rep.warnings.eta_clamps += wc2.eta_clamps;
  rep.warnings.rho_truncations += wc2.truncations;

  t0 = Clock::now();
  const bool need_bootstrap =
      config.variance == "bootstrap" || config.band == "nonparametric";
  ThetaCovariance cov;
  std::vector<Eigen::VectorXd> draws;
  if (need_bootstrap) {
    SolveDiagnostics boot_diag;
    const int T = std::max(config.bootstrap_reps, config.band == "nonparametric"
                                                      ? config.band_reps
                                                      : config.bootstrap_reps);
    cov = fast_cluster_bootstrap(inputs, lambda1, T, config.seed, threads,
                                 config.band == "nonparametric" ? &draws : nullptr, &boot_diag);
    rep.warnings.jitter_fallbacks += boot_diag.jitter_used ? 1 : 0;
    rep.warnings.bootstrap_rank_deficient = cov.rank_deficient;
  }
  if (config.variance == "sandwich") {
    SolveDiagnostics sw_diag;
    cov = sandwich_variance(ctx, rep.theta1, wc2.model, wc2.phi, lambda1, threads, &sw_diag);
    rep.warnings.jitter_fallbacks += sw_diag.jitter_used ? 1 : 0;
  }
  rep.timing.variance = seconds_since(t0);

  t0 = Clock::now();
  rep.bands = build_bands(ctx, rep.theta1, cov.cov,
                          config.band == "nonparametric" ? &draws : nullptr, config,
                          rep.warnings);
  rep.timing.bands = seconds_since(t0);
  rep.timing.total = seconds_since(t_total);
  return rep;
}

FitReport run_fosr(const FunctionalDataset& data, const RunConfig& config) {
  config.validate();
  const auto t_total = Clock::now();
  const int threads = config.resolved_threads();
  const Family family = Family::parse(config.family);
  const BasisSpec spec = BasisSpec::from_knot_count(config.knots, config.knots_count_basis,
                                                    config.degree, config.penalty_order);
  const ModelContext ctx = make_context(data, spec, family);

  FitReport rep;
  rep.estimator = "fosr";
  fill_meta(rep, config, ctx);
  rep.structure = "independence";

  auto t0 = Clock::now();
  const InitialFit init = compute_initial(ctx, config, threads);
  rep.timing.initial_fit = seconds_since(t0);
  rep.theta0 = init.theta0;
  rep.theta1 = init.theta0;
  rep.lambda0 = init.lambda0;
  rep.lambda1 = init.lambda0;
  rep.gcv_trace = init.gcv_trace;
  rep.warnings.eta_clamps += init.eta_clamps;

  t0 = Clock::now();
  const WorkCovEstimate wc = estimate_working_cov(ctx, init.theta0, CorrStructure::independence,
                                                  config.rho_eps, 0, threads);
  rep.phi = wc.phi;
  rep.timing.rho_pass1 = seconds_since(t0);

  t0 = Clock::now();
  ThetaCovariance cov;
  std::vector<Eigen::VectorXd> draws;
  ClusterSummaries summaries;
  OneStepInputs inputs;
  const bool need_bootstrap =
      config.variance == "bootstrap" || config.band == "nonparametric";
  if (need_bootstrap) {
    summaries = compute_cluster_summaries(ctx, init.theta0, wc.model, wc.phi, threads);
    inputs = {init.theta0, &summaries, &ctx.penalty};
    const int T = std::max(config.bootstrap_reps, config.band == "nonparametric"
                                                      ? config.band_reps
                                                      : config.bootstrap_reps);
    SolveDiagnostics boot_diag;
    cov = fast_cluster_bootstrap(inputs, init.lambda0, T, config.seed, threads,
                                 config.band == "nonparametric" ? &draws : nullptr, &boot_diag);
    rep.warnings.bootstrap_rank_deficient = cov.rank_deficient;
  }
  if (config.variance == "sandwich") {
    SolveDiagnostics sw_diag;
    cov = sandwich_variance(ctx, init.theta0, wc.model, wc.phi, init.lambda0, threads, &sw_diag);
    rep.warnings.jitter_fallbacks += sw_diag.jitter_used ? 1 : 0;
  }
  rep.timing.variance = seconds_since(t0);

  t0 = Clock::now();
  rep.bands = build_bands(ctx, init.theta0, cov.cov,
                          config.band == "nonparametric" ? &draws : nullptr, config,
                          rep.warnings);
  rep.timing.bands = seconds_since(t0);
  rep.timing.total = seconds_since(t_total);
  return rep;
}

FitReport run_gls(const FunctionalDataset& data, const RunConfig& config) {
  config.validate();
  if (Family::parse(config.family).tag != FamilyTag::gaussian)
    throw validation_error("gls benchmark requires the gaussian family");
  const auto t_total = Clock::now();
  const int threads = config.resolved_threads();
  const CorrStructure structure = parse_structure(config.structure);
  const BasisSpec spec = BasisSpec::from_knot_count(config.knots, config.knots_count_basis,
                                                    config.degree, config.penalty_order);
  const ModelContext ctx = make_context(data, spec, Family::gaussian());

  FitReport rep;
  rep.estimator = "gls";
  fill_meta(rep, config, ctx);

  auto t0 = Clock::now();
  const InitialFit init = compute_initial(ctx, config, threads);
  rep.timing.initial_fit = seconds_since(t0);
  rep.theta0 = init.theta0;
  rep.lambda0 = init.lambda0;
  rep.gcv_trace = init.gcv_trace;

  // Correlation parameters at the initial estimate go into V-hat.
  t0 = Clock::now();
  const WorkCovEstimate wc1 = estimate_working_cov(ctx, init.theta0, structure, config.rho_eps,
                                                   config.rho_smooth_window, threads);
  rep.timing.rho_pass1 = seconds_since(t0);
  rep.rho_pass1 = wc1.model.rho;
  rep.phi = wc1.phi;
  rep.warnings.rho_truncations += wc1.truncations;

  // Summaries at theta = 0 make sumW = sum X'V^{-1}X and sumb = sum X'V^{-1}Y.
  t0 = Clock::now();
  const ClusterSummaries summaries = compute_cluster_summaries(
      ctx, Eigen::VectorXd::Zero(ctx.p()), wc1.model, wc1.phi, threads);
  double update_seconds = seconds_since(t0);
  const OneStepInputs inputs{Eigen::VectorXd::Zero(ctx.p()), &summaries, &ctx.penalty};

  t0 = Clock::now();
  Eigen::VectorXd lambda_g;
  if (config.fixed_lambda1 >= 0.0) {
    lambda_g = Eigen::VectorXd::Constant(ctx.q() + 1, config.fixed_lambda1);
  } else {
    const CvPlan plan =
        CvPlan::make(ctx.N(), config.folds, config.seed,
                     config.criterion == "nll" ? CvCriterion::nll : CvCriterion::mse);
    lambda_g = sequential_tune(ctx, inputs, plan, init.lambda0, TuneMode::gls, wc1.phi, threads,
                               grids_from_config(config), &rep.tune_trace);
  }
  rep.timing.tuning = seconds_since(t0);
  rep.lambda1 = lambda_g;

  t0 = Clock::now();
  {
    PenalizedSolver solver(summaries.sumW / ctx.N(), ctx.penalty, lambda_g);
    rep.warnings.jitter_fallbacks += solver.jitter_used() ? 1 : 0;
    rep.theta1 = solver.solve(summaries.sumb / ctx.N());
  }
  update_seconds += seconds_since(t0);
  rep.timing.update = update_seconds;

  t0 = Clock::now();
  const WorkCovEstimate wc2 = estimate_working_cov(ctx, rep.theta1, structure, config.rho_eps,
                                                   config.rho_smooth_window, threads);
  rep.timing.rho_pass2 = seconds_since(t0);
  rep.rho_pass2 = wc2.model.rho;
  rep.warnings.rho_truncations += wc2.truncations;

  t0 = Clock::now();
  SolveDiagnostics sw_diag;
  const ThetaCovariance cov =
      sandwich_variance(ctx, rep.theta1, wc2.model, wc2.phi, lambda_g, threads, &sw_diag);
  rep.warnings.jitter_fallbacks += sw_diag.jitter_used ? 1 : 0;
  rep.timing.variance = seconds_since(t0);

  t0 = Clock::now();
  rep.bands = build_bands(ctx, rep.theta1, cov.cov, nullptr, config, rep.warnings);
  rep.timing.bands = seconds_since(t0);
  rep.timing.total = seconds_since(t_total);
  return rep;
}

namespace {

BenchmarkRow aggregate_rows(const std::string& design, const std::string& estimator,
                            const std::vector<MetricReport>& metrics,
                            const std::vector<MetricReport>& fosr_metrics) {
  BenchmarkRow row;
  row.design = design;
  row.estimator = estimator;
  row.replicates = static_cast<int>(metrics.size());
  const int T = row.replicates;
  auto mean_sem = [T](auto&& get, double& mean, double& sem) {
    mean = 0.0;
    for (int t = 0; t < T; ++t) mean += get(t);
    mean /= T;
    if (T < 2) {
      sem = std::numeric_limits<double>::quiet_NaN();  // reported blank
      return;
    }
    double ss = 0.0;
    for (int t = 0; t < T; ++t) {
      const double d = get(t) - mean;
      ss += d * d;
    }
    sem = std::sqrt(ss / (T - 1) / T);
  };
  mean_sem([&](int t) { return metrics[t].rmse; }, row.rmse_mean, row.rmse_sem);
  mean_sem([&](int t) { return metrics[t].rmse / fosr_metrics[t].rmse; }, row.ratio_mean,
           row.ratio_sem);
  mean_sem([&](int t) { return metrics[t].pointwise_coverage; }, row.pointwise_mean,
           row.pointwise_sem);
  mean_sem([&](int t) { return metrics[t].joint_coverage; }, row.joint_mean, row.joint_sem);
  mean_sem([&](int t) { return metrics[t].fit_seconds; }, row.time_mean, row.time_sem);
  return row;
}

}  // namespace

BenchmarkResult run_design_benchmark(const SimDesign& design, int replicates,
                                     std::uint64_t seed, const RunConfig& base,
                                     std::ostream* progress) {
  if (replicates < 1) throw validation_error("benchmark: need at least one replicate");
  BenchmarkResult result;
  result.estimators = {"onestep", "fosr"};
  const bool gaussian = design.family().tag == FamilyTag::gaussian;
  if (gaussian) {
    result.estimators.push_back("gls-ind");
    result.estimators.push_back(design.natural_structure() == CorrStructure::exchangeable
                                    ? "gls-ex"
                                    : "gls-ar1");
  }
  const int E = static_cast<int>(result.estimators.size());
  result.per_replicate.assign(E, std::vector<MetricReport>(replicates));

  const int outer_threads = base.resolved_threads();
  parallel_for(replicates, outer_threads, [&](std::size_t t) {
    const std::uint64_t rep_seed = stats::split_seed(seed, t);
    const FunctionalDataset data = generate(design, rep_seed);
    const Eigen::MatrixXd truth = true_betas(design, data.grid);

    RunConfig config = base;
    config.threads = 1;  // replicates already run in parallel
    config.seed = rep_seed;
    config.family = design.family().name();
    config.structure = structure_name(design.natural_structure());

    for (int e = 0; e < E; ++e) {
      const std::string& est = result.estimators[e];
      FitReport rep;
      if (est == "onestep") {
        rep = run_fit(data, config);
      } else if (est == "fosr") {
        RunConfig c = config;
        c.structure = "independence";
        rep = run_fosr(data, c);
      } else {
        RunConfig c = config;
        c.structure = est == "gls-ind" ? "independence" : config.structure;
        rep = run_gls(data, c);
      }
      result.per_replicate[e][t] = score_fit(truth, rep.bands);
      result.per_replicate[e][t].fit_seconds = rep.timing.total;
    }
    if (progress) (*progress) << "." << std::flush;
  });
  if (progress) (*progress) << "\n";

  const auto& fosr = result.per_replicate[1];
  for (int e = 0; e < E; ++e)
    result.rows.push_back(
        aggregate_rows(design.name(), result.estimators[e], result.per_replicate[e], fosr));
  return result;
}

}  // namespace fgee
