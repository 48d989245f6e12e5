#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <vector>

#include <json.hpp>

#include "fgee/errors.hpp"
#include "fgee/pipeline.hpp"

namespace fgee {

namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.12g", v);
  return buf;
}

struct CurveColumns {
  std::vector<double> s, estimate, se, pw_lo, pw_hi, joint_lo, joint_hi;
};

/// Minimal line-plus-band figure: joint band as the light ribbon,
/// pointwise band darker, estimate on top.
void write_band_svg(const std::string& path, const CurveColumns& c, const std::string& title) {
  const int W = 640, H = 420;
  const double ml = 60, mr = 15, mt = 30, mb = 40;
  const double plot_w = W - ml - mr, plot_h = H - mt - mb;

  double x_min = c.s.front(), x_max = c.s.back();
  double y_min = c.joint_lo.front(), y_max = c.joint_hi.front();
  for (std::size_t i = 0; i < c.s.size(); ++i) {
    y_min = std::min({y_min, c.joint_lo[i], c.estimate[i]});
    y_max = std::max({y_max, c.joint_hi[i], c.estimate[i]});
  }
  if (y_max == y_min) {
    y_max += 1.0;
    y_min -= 1.0;
  }
  const double pad = 0.05 * (y_max - y_min);
  y_min -= pad;
  y_max += pad;

  auto px = [&](double s) { return ml + (s - x_min) / (x_max - x_min) * plot_w; };
  auto py = [&](double y) { return mt + (y_max - y) / (y_max - y_min) * plot_h; };
  auto ribbon = [&](const std::vector<double>& lo, const std::vector<double>& hi) {
    std::ostringstream pts;
    for (std::size_t i = 0; i < c.s.size(); ++i)
      pts << fmt(px(c.s[i])) << "," << fmt(py(hi[i])) << " ";
    for (std::size_t i = c.s.size(); i-- > 0;)
      pts << fmt(px(c.s[i])) << "," << fmt(py(lo[i])) << " ";
    return pts.str();
  };

  std::ofstream out(path);
  if (!out) throw validation_error("cannot write plot file: " + path);
  out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << W << "' height='" << H << "'>\n";
  out << "<rect width='100%' height='100%' fill='white'/>\n";
  out << "<text x='" << W / 2 << "' y='18' text-anchor='middle' font-family='sans-serif' "
         "font-size='14'>"
      << title << "</text>\n";
  out << "<polygon points='" << ribbon(c.joint_lo, c.joint_hi)
      << "' fill='#c6dbef' stroke='none'/>\n";
  out << "<polygon points='" << ribbon(c.pw_lo, c.pw_hi) << "' fill='#6baed6' stroke='none' "
         "fill-opacity='0.55'/>\n";
  out << "<polyline fill='none' stroke='#08306b' stroke-width='1.5' points='";
  for (std::size_t i = 0; i < c.s.size(); ++i)
    out << fmt(px(c.s[i])) << "," << fmt(py(c.estimate[i])) << " ";
  out << "'/>\n";
  // Axes with end labels.
  out << "<line x1='" << ml << "' y1='" << mt + plot_h << "' x2='" << ml + plot_w << "' y2='"
      << mt + plot_h << "' stroke='black'/>\n";
  out << "<line x1='" << ml << "' y1='" << mt << "' x2='" << ml << "' y2='" << mt + plot_h
      << "' stroke='black'/>\n";
  out << "<text x='" << ml << "' y='" << H - 12
      << "' font-family='sans-serif' font-size='11'>" << fmt(x_min) << "</text>\n";
  out << "<text x='" << ml + plot_w << "' y='" << H - 12
      << "' text-anchor='end' font-family='sans-serif' font-size='11'>" << fmt(x_max)
      << "</text>\n";
  out << "<text x='" << ml - 6 << "' y='" << py(y_min)
      << "' text-anchor='end' font-family='sans-serif' font-size='11'>" << fmt(y_min)
      << "</text>\n";
  out << "<text x='" << ml - 6 << "' y='" << py(y_max) + 10
      << "' text-anchor='end' font-family='sans-serif' font-size='11'>" << fmt(y_max)
      << "</text>\n";
  out << "</svg>\n";
}

}  // namespace

void write_report(const FitReport& report, const RunConfig& config) {
  fs::create_directories(config.output_dir);
  const fs::path dir(config.output_dir);

  {
    std::ofstream out(dir / "coefficients.csv");
    if (!out) throw validation_error("cannot write coefficients.csv");
    out << "r,s,estimate,se,pw_lo,pw_hi,joint_lo,joint_hi\n";
    for (std::size_t r = 0; r < report.bands.size(); ++r) {
      const auto& band = report.bands[r];
      for (int l = 0; l < report.grid.size(); ++l) {
        out << r << ',' << fmt(report.grid[l]) << ',' << fmt(band.estimate[l]) << ','
            << fmt(band.se[l]) << ',' << fmt(band.pw_lo[l]) << ',' << fmt(band.pw_hi[l]) << ','
            << fmt(band.joint_lo[l]) << ',' << fmt(band.joint_hi[l]) << "\n";
      }
    }
  }

  {
    std::ofstream out(dir / "rho.csv");
    if (!out) throw validation_error("cannot write rho.csv");
    out << "s,rho_pass1,rho_pass2\n";
    for (int l = 0; l < report.grid.size(); ++l) {
      out << fmt(report.grid[l]) << ',';
      out << (report.rho_pass1.size() ? fmt(report.rho_pass1[l]) : "") << ',';
      out << (report.rho_pass2.size() ? fmt(report.rho_pass2[l]) : "") << "\n";
    }
  }

  {
    json manifest;
    manifest["library"] = "fgee";
    manifest["version"] = "0.1.0";
    manifest["estimator"] = report.estimator;
    manifest["input_path"] = config.input_path;
    manifest["output_dir"] = config.output_dir;
    manifest["family"] = config.family;
    manifest["structure"] = config.structure;
    manifest["knots"] = config.knots;
    manifest["knots_count_basis"] = config.knots_count_basis;
    manifest["degree"] = config.degree;
    manifest["penalty_order"] = config.penalty_order;
    manifest["folds"] = config.folds;
    manifest["bootstrap_reps"] = config.bootstrap_reps;
    manifest["band_reps"] = config.band_reps;
    manifest["alpha"] = config.alpha;
    manifest["seed"] = config.seed;
    manifest["threads"] = config.threads;
    manifest["variance"] = config.variance;
    manifest["band"] = config.band;
    manifest["cv"] = config.cv;
    manifest["criterion"] = config.criterion;
    manifest["rho_eps"] = config.rho_eps;
    manifest["rho_smooth_window"] = config.rho_smooth_window;
    manifest["per_block_lambda0"] = config.per_block_lambda0;
    manifest["lambda0_grid_size"] = config.lambda0_grid_size;
    manifest["fixed_lambda0"] = config.fixed_lambda0;
    manifest["fixed_lambda1"] = config.fixed_lambda1;
    manifest["phi"] = report.phi;
    for (int r = 0; r < report.lambda0.size(); ++r)
      manifest["lambda0_block" + std::to_string(r)] = report.lambda0[r];
    for (int r = 0; r < report.lambda1.size(); ++r)
      manifest["lambda1_block" + std::to_string(r)] = report.lambda1[r];
    manifest["time_initial_fit"] = report.timing.initial_fit;
    manifest["time_rho_pass1"] = report.timing.rho_pass1;
    manifest["time_tuning"] = report.timing.tuning;
    manifest["time_update"] = report.timing.update;
    manifest["time_rho_pass2"] = report.timing.rho_pass2;
    manifest["time_variance"] = report.timing.variance;
    manifest["time_bands"] = report.timing.bands;
    manifest["time_total"] = report.timing.total;
    manifest["warn_eta_clamps"] = report.warnings.eta_clamps;
    manifest["warn_rho_truncations"] = report.warnings.rho_truncations;
    manifest["warn_jitter_fallbacks"] = report.warnings.jitter_fallbacks;
    manifest["warn_rho_all_singleton"] = report.warnings.rho_all_singleton;
    manifest["warn_bootstrap_rank_deficient"] = report.warnings.bootstrap_rank_deficient;
    manifest["warn_band_sigma_clipped"] = report.warnings.band_sigma_clipped;
    manifest["warn_band_reps_too_few"] = report.warnings.band_reps_too_few;
    std::ofstream out(dir / "manifest.json");
    if (!out) throw validation_error("cannot write manifest.json");
    out << manifest.dump(2) << "\n";
  }

  {
    std::ofstream out(dir / "tuning_trace.csv");
    out << "stage,score";
    for (int r = 0; r < report.lambda1.size(); ++r) out << ",lambda" << r;
    out << "\n";
    for (const auto& e : report.tune_trace.entries) {
      out << e.stage << ',' << fmt(e.score);
      for (int r = 0; r < e.lambda.size(); ++r) out << ',' << fmt(e.lambda[r]);
      out << "\n";
    }
    for (const auto& [lambda, score] : report.gcv_trace)
      out << 0 << ',' << fmt(score) << ',' << fmt(lambda) << "\n";
  }

  for (std::size_t r = 0; r < report.bands.size(); ++r) {
    CurveColumns c;
    const auto& band = report.bands[r];
    for (int l = 0; l < report.grid.size(); ++l) {
      c.s.push_back(report.grid[l]);
      c.estimate.push_back(band.estimate[l]);
      c.se.push_back(band.se[l]);
      c.pw_lo.push_back(band.pw_lo[l]);
      c.pw_hi.push_back(band.pw_hi[l]);
      c.joint_lo.push_back(band.joint_lo[l]);
      c.joint_hi.push_back(band.joint_hi[l]);
    }
    write_band_svg((dir / ("coefficient_" + std::to_string(r) + ".svg")).string(), c,
                   "beta_" + std::to_string(r) + "(s)");
  }
}

void replot(const std::string& coefficients_csv, const std::string& output_dir) {
  std::ifstream in(coefficients_csv);
  if (!in) throw validation_error("cannot open " + coefficients_csv);
  std::string line;
  if (!std::getline(in, line)) throw validation_error("empty coefficients file");
  std::map<int, CurveColumns> curves;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ss(line);
    std::string field;
    std::vector<double> vals;
    while (std::getline(ss, field, ',')) vals.push_back(std::stod(field));
    if (vals.size() != 8) throw validation_error("coefficients.csv: expected 8 columns");
    CurveColumns& c = curves[static_cast<int>(vals[0])];
    c.s.push_back(vals[1]);
    c.estimate.push_back(vals[2]);
    c.se.push_back(vals[3]);
    c.pw_lo.push_back(vals[4]);
    c.pw_hi.push_back(vals[5]);
    c.joint_lo.push_back(vals[6]);
    c.joint_hi.push_back(vals[7]);
  }
  fs::create_directories(output_dir);
  for (const auto& [r, c] : curves)
    write_band_svg((fs::path(output_dir) / ("coefficient_" + std::to_string(r) + ".svg")).string(),
                   c, "beta_" + std::to_string(r) + "(s)");
}

void write_benchmark_csv(const std::vector<BenchmarkRow>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw validation_error("cannot write benchmark table: " + path);
  out << "design,estimator,replicates,rmse,rmse_sem,ratio_vs_fosr,ratio_sem,"
         "pointwise_coverage,pointwise_sem,joint_coverage,joint_sem,time_mean,time_sem\n";
  auto sem = [](double v) { return std::isnan(v) ? std::string() : fmt(v); };
  for (const auto& r : rows) {
    out << r.design << ',' << r.estimator << ',' << r.replicates << ',' << fmt(r.rmse_mean) << ','
        << sem(r.rmse_sem) << ',' << fmt(r.ratio_mean) << ',' << sem(r.ratio_sem) << ','
        << fmt(r.pointwise_mean) << ',' << sem(r.pointwise_sem) << ',' << fmt(r.joint_mean) << ','
        << sem(r.joint_sem) << ',' << fmt(r.time_mean) << ',' << sem(r.time_sem) << "\n";
  }
}

}  // namespace fgee
