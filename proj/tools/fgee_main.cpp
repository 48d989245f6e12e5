// fgee: one-step penalized functional GEE for longitudinal functional
// outcomes. Subcommands: fit, simulate, benchmark, plot.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "fgee/errors.hpp"
#include "fgee/pipeline.hpp"

namespace {

void add_config_flags(CLI::App* cmd, fgee::RunConfig& config) {
  cmd->add_option("--family", config.family, "Outcome family: gaussian|binomial|poisson");
  cmd->add_option("--structure", config.structure,
                  "Working correlation: independence|exchangeable|ar1");
  cmd->add_option("--knots", config.knots, "Interior knot count per coefficient");
  cmd->add_flag("--knots-count-basis", config.knots_count_basis,
                "Interpret --knots as the basis dimension instead of interior knots");
  cmd->add_option("--degree", config.degree, "B-spline degree");
  cmd->add_option("--penalty-order", config.penalty_order, "Difference penalty order");
  cmd->add_option("--folds", config.folds, "Cross-validation fold count");
  cmd->add_option("--bootstrap-reps", config.bootstrap_reps, "Fast bootstrap replicates");
  cmd->add_option("--band-reps", config.band_reps, "Joint-band sampling replicates");
  cmd->add_option("--alpha", config.alpha, "Band level alpha");
  cmd->add_option("--seed", config.seed, "Master RNG seed");
  cmd->add_option("--threads", config.threads, "Worker threads (0 = hardware)");
  cmd->add_option("--variance", config.variance, "Variance source: sandwich|bootstrap");
  cmd->add_option("--band", config.band, "Joint band type: parametric|nonparametric");
  cmd->add_option("--cv", config.cv, "Fold estimator: fast|standard");
  cmd->add_option("--criterion", config.criterion, "CV criterion: nll|mse");
  cmd->add_option("--rho-eps", config.rho_eps, "Correlation truncation margin");
  cmd->add_option("--rho-smooth-window", config.rho_smooth_window,
                  "Odd moving-average window for rho(s); 0 disables");
  cmd->add_flag("--per-block-lambda0", config.per_block_lambda0,
                "Refine the initial smoothing parameter per coefficient block");
  cmd->add_option("--lambda0-grid-size", config.lambda0_grid_size, "GCV grid size");
  cmd->add_option("--stage1-grid", config.stage1_grid, "Stage-1 multipliers on Lambda_0");
  cmd->add_option("--stage2-grid", config.stage2_grid, "Stage-2 per-block multipliers");
  cmd->add_option("--stage3-grid", config.stage3_grid, "Stage-3 local multipliers");
  cmd->add_option("--fixed-lambda0", config.fixed_lambda0,
                  "Skip GCV and use this initial smoothing parameter");
  cmd->add_option("--fixed-lambda1", config.fixed_lambda1,
                  "Skip CV and use this one-step smoothing parameter");
}

int run_fit_command(const fgee::RunConfig& config, const std::string& estimator) {
  const fgee::FunctionalDataset data = fgee::read_long_csv(config.input_path);
  fgee::FitReport report;
  if (estimator == "onestep")
    report = fgee::run_fit(data, config);
  else if (estimator == "fosr")
    report = fgee::run_fosr(data, config);
  else if (estimator == "gls")
    report = fgee::run_gls(data, config);
  else
    throw fgee::validation_error("unknown estimator '" + estimator +
                                 "' (expected onestep|fosr|gls)");
  fgee::write_report(report, config);
  std::printf("wrote %s (N=%d curves, total %.2fs: init %.2fs, rho %.2fs, tune %.2fs, "
              "update %.2fs, variance %.2fs)\n",
              config.output_dir.c_str(), static_cast<int>(report.bands.size()),
              report.timing.total, report.timing.initial_fit,
              report.timing.rho_pass1 + report.timing.rho_pass2, report.timing.tuning,
              report.timing.update, report.timing.variance);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"one-step penalized functional GEE"};
  app.require_subcommand(1);

  fgee::RunConfig config;
  std::string estimator = "onestep";

  auto* fit = app.add_subcommand("fit", "Fit a model to a long-format CSV file");
  fit->add_option("--input", config.input_path, "Input CSV path")->required();
  fit->add_option("--output-dir", config.output_dir, "Output directory");
  fit->add_option("--estimator", estimator, "onestep|fosr|gls");
  add_config_flags(fit, config);

  std::string design_name = "gaussian-exch";
  int sim_N = 50, sim_ni = 25, sim_L = 100;
  double sim_rho = 0.5;
  std::uint64_t sim_seed = 1;
  std::string sim_output = "simulated.csv";
  auto* sim = app.add_subcommand("simulate", "Generate a dataset from a named design");
  sim->add_option("--design", design_name,
                  "gaussian-exch|gaussian-exch-variant|gaussian-ar1|binary-ar1");
  sim->add_option("--n-clusters", sim_N, "Cluster count N");
  sim->add_option("--cluster-size", sim_ni, "Observations per cluster n_i");
  sim->add_option("--grid-size", sim_L, "Grid size L");
  sim->add_option("--rho", sim_rho, "AR1 correlation target");
  sim->add_option("--seed", sim_seed, "RNG seed");
  sim->add_option("--output", sim_output, "Output CSV path");

  std::vector<std::string> bench_designs = {"gaussian-exch"};
  int bench_reps = 100;
  int bench_N = 50, bench_ni = 25, bench_L = 100;
  double bench_rho = 0.75;
  auto* bench = app.add_subcommand("benchmark", "Monte Carlo benchmark tables");
  bench->add_option("--designs", bench_designs, "Design presets to run");
  bench->add_option("--replicates", bench_reps, "Replicates per design");
  bench->add_option("--n-clusters", bench_N, "Cluster count N");
  bench->add_option("--cluster-size", bench_ni, "Observations per cluster n_i");
  bench->add_option("--grid-size", bench_L, "Grid size L");
  bench->add_option("--rho", bench_rho, "AR1 correlation for *-ar1 designs");
  bench->add_option("--output-dir", config.output_dir, "Output directory");
  add_config_flags(bench, config);

  std::string plot_input, plot_dir = "fgee-output";
  auto* plot = app.add_subcommand("plot", "Re-emit band plots from coefficients.csv");
  plot->add_option("--coefficients", plot_input, "coefficients.csv path")->required();
  plot->add_option("--output-dir", plot_dir, "Output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (fit->parsed()) return run_fit_command(config, estimator);

    if (sim->parsed()) {
      const fgee::SimDesign design =
          fgee::SimDesign::parse(design_name, sim_N, sim_ni, sim_rho, sim_L);
      const fgee::FunctionalDataset data = fgee::generate(design, sim_seed);
      fgee::write_long_csv(data, sim_output);
      std::printf("wrote %s (N=%d, n_i=%d, L=%d)\n", sim_output.c_str(), sim_N, sim_ni, sim_L);
      return 0;
    }

    if (bench->parsed()) {
      std::filesystem::create_directories(config.output_dir);
      std::vector<fgee::BenchmarkRow> all_rows;
      for (const auto& name : bench_designs) {
        const fgee::SimDesign design =
            fgee::SimDesign::parse(name, bench_N, bench_ni, bench_rho, bench_L);
        std::cout << name << " x" << bench_reps << " " << std::flush;
        const fgee::BenchmarkResult result =
            fgee::run_design_benchmark(design, bench_reps, config.seed, config, &std::cout);
        all_rows.insert(all_rows.end(), result.rows.begin(), result.rows.end());
      }
      const std::string table = config.output_dir + "/benchmark.csv";
      fgee::write_benchmark_csv(all_rows, table);
      std::printf("wrote %s\n", table.c_str());
      return 0;
    }

    if (plot->parsed()) {
      fgee::replot(plot_input, plot_dir);
      std::printf("wrote plots to %s\n", plot_dir.c_str());
      return 0;
    }
  } catch (const fgee::validation_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const fgee::numeric_error& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
