#include "fgee/initial_fit.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "fgee/errors.hpp"
#include "fgee/parallel.hpp"

namespace fgee {

namespace {

struct PooledAccum {
  Eigen::MatrixXd xtwx;
  Eigen::VectorXd xtwz;
  double deviance = 0.0;
  long clamps = 0;
};

/// Pooled X'WX and X'Wz over all observations. When curves == nullptr the
/// IRLS data initialization is used (mu from y, eta = g(mu)). The cluster
/// range is split into a fixed number of chunks reduced in order, so
/// results do not depend on the thread count.
PooledAccum accumulate_pooled(const ModelContext& ctx, const Eigen::MatrixXd* curves,
                              int threads) {
  const int N = ctx.N();
  const int p = ctx.p();
  const int m = ctx.m();
  const int blocks = ctx.q() + 1;
  const int width = ctx.basis.degree + 1;
  const int L = ctx.L();

  const int num_chunks = std::min(N, 32);
  std::vector<PooledAccum> partial(num_chunks);

  parallel_for(num_chunks, threads, [&](std::size_t c) {
    PooledAccum& acc = partial[c];
    acc.xtwx = Eigen::MatrixXd::Zero(p, p);
    acc.xtwz = Eigen::VectorXd::Zero(p);
    const int lo = static_cast<int>(c * N / num_chunks);
    const int hi = static_cast<int>((c + 1) * N / num_chunks);
    Eigen::MatrixXd C, Ml(blocks, blocks);
    Eigen::VectorXd vl(blocks);

    for (int i = lo; i < hi; ++i) {
      const Cluster& cluster = ctx.data->clusters[i];
      const int n = cluster.n();
      Eigen::ArrayXXd eta;
      LinkEval link;
      if (curves) {
        eta = ctx.linear_predictor(i, *curves);
        link = evaluate_link(ctx.family, eta);
      } else {
        // Data initialization keeps mu strictly inside the family domain.
        Eigen::ArrayXXd mu0(n, L);
        switch (ctx.family.tag) {
          case FamilyTag::gaussian: mu0 = cluster.y.array(); break;
          case FamilyTag::binomial: mu0 = (cluster.y.array() + 0.5) / 2.0; break;
          case FamilyTag::poisson: mu0 = cluster.y.array() + 0.1; break;
        }
        eta.resize(n, L);
        switch (ctx.family.tag) {
          case FamilyTag::gaussian: eta = mu0; break;
          case FamilyTag::binomial: eta = (mu0 / (1.0 - mu0)).log(); break;
          case FamilyTag::poisson: eta = mu0.log(); break;
        }
        link = evaluate_link(ctx.family, eta);
      }
      acc.clamps += link.clamped;

      for (int l = 0; l < L; ++l) {
        ctx.covariate_rows(i, l, C);
        Ml.setZero();
        vl.setZero();
        for (int j = 0; j < n; ++j) {
          const double dmu = link.dmu(j, l);
          const double v = link.var(j, l);
          const double w = dmu * dmu / v;
          // w*z = w*eta + dmu*(y - mu)/v stays finite at saturated means.
          const double wz = w * eta(j, l) + dmu * (cluster.y(j, l) - link.mu(j, l)) / v;
          acc.deviance += deviance_unit(ctx.family, cluster.y(j, l), link.mu(j, l));
          Ml.noalias() += w * (C.row(j).transpose() * C.row(j));
          vl.noalias() += wz * C.row(j).transpose();
        }
        const int f = ctx.basis.first[l];
        for (int r1 = 0; r1 < blocks; ++r1) {
          acc.xtwz.segment(r1 * m + f, width) += vl[r1] * ctx.basis.band.row(l).transpose();
          for (int r2 = 0; r2 < blocks; ++r2) {
            const double cv = Ml(r1, r2);
            if (cv == 0.0) continue;
            for (int d1 = 0; d1 < width; ++d1)
              acc.xtwx.block(r1 * m + f + d1, r2 * m + f, 1, width) +=
                  (cv * ctx.basis.band(l, d1)) * ctx.basis.band.row(l);
          }
        }
      }
    }
  });

  PooledAccum total;
  total.xtwx = Eigen::MatrixXd::Zero(p, p);
  total.xtwz = Eigen::VectorXd::Zero(p);
  for (const auto& acc : partial) {
    total.xtwx += acc.xtwx;
    total.xtwz += acc.xtwz;
    total.deviance += acc.deviance;
    total.clamps += acc.clamps;
  }
  return total;
}

[[noreturn]] void throw_singular(const ModelContext& ctx, const Eigen::MatrixXd& xtwx,
                                 const Eigen::MatrixXd& H) {
  const int m = ctx.m();
  int worst = 0;
  double worst_trace = std::numeric_limits<double>::max();
  for (int r = 0; r <= ctx.q(); ++r) {
    const double tr = xtwx.block(r * m, r * m, m, m).trace();
    if (tr < worst_trace) {
      worst_trace = tr;
      worst = r;
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(H, Eigen::EigenvaluesOnly);
  throw numeric_error("pirls: singular penalized system; weakest coefficient block is " +
                      std::to_string(worst) + " (block trace " + std::to_string(worst_trace) +
                      ", min eigenvalue " + std::to_string(es.eigenvalues().minCoeff()) + ")");
}

Eigen::VectorXd solve_penalized(const ModelContext& ctx, const PooledAccum& acc,
                                const Eigen::VectorXd& lambda_sum) {
  Eigen::MatrixXd H = acc.xtwx;
  ctx.penalty.add_scaled(lambda_sum, 1.0, H);
  Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
  Eigen::VectorXd theta = ldlt.solve(acc.xtwz);
  if (ldlt.info() != Eigen::Success || !theta.allFinite() ||
      ldlt.vectorD().minCoeff() <= 0.0)
    throw_singular(ctx, acc.xtwx, H);
  return theta;
}

double hat_trace(const ModelContext& ctx, const Eigen::MatrixXd& xtwx,
                 const Eigen::VectorXd& lambda_sum) {
  Eigen::MatrixXd H = xtwx;
  ctx.penalty.add_scaled(lambda_sum, 1.0, H);
  Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
  return ldlt.solve(xtwx).trace();
}

}  // namespace

PirlsResult pirls_fit(const ModelContext& ctx, const Eigen::VectorXd& lambda0, int threads,
                      const Eigen::VectorXd* warm_start) {
  if (lambda0.size() != ctx.q() + 1)
    throw validation_error("pirls_fit: lambda block count mismatch");
  const Eigen::VectorXd lambda_sum = static_cast<double>(ctx.N()) * lambda0;

  PirlsResult out;
  Eigen::MatrixXd curves;
  const Eigen::MatrixXd* curves_ptr = nullptr;
  if (warm_start) {
    curves = ctx.coefficient_curves(*warm_start);
    curves_ptr = &curves;
    out.theta = *warm_start;
  }

  // Gaussian identity: the IRLS map is constant, one solve is exact.
  const int max_iter = ctx.family.tag == FamilyTag::gaussian ? 1 : 50;
  double prev_dev = std::numeric_limits<double>::max();
  int rising = 0;
  PooledAccum acc;

  for (int it = 1; it <= max_iter; ++it) {
    acc = accumulate_pooled(ctx, curves_ptr, threads);
    out.eta_clamps += acc.clamps;
    Eigen::VectorXd theta_new = solve_penalized(ctx, acc, lambda_sum);
    const double delta =
        out.theta.size() == 0 ? std::numeric_limits<double>::max()
                              : (theta_new - out.theta).cwiseAbs().maxCoeff();
    out.theta = std::move(theta_new);
    out.iterations = it;

    if (acc.deviance > prev_dev) {
      if (++rising >= 5)
        throw numeric_error("pirls: deviance increased 5 consecutive iterations (last " +
                            std::to_string(acc.deviance) + "), fit is diverging");
    } else {
      rising = 0;
    }
    prev_dev = acc.deviance;

    if (ctx.family.tag == FamilyTag::gaussian || delta < 1e-8) {
      out.converged = true;
      break;
    }
    curves = ctx.coefficient_curves(out.theta);
    curves_ptr = &curves;
  }

  // Deviance and hat trace at the final coefficients.
  curves = ctx.coefficient_curves(out.theta);
  curves_ptr = &curves;
  const PooledAccum final_acc = accumulate_pooled(ctx, curves_ptr, threads);
  out.deviance = final_acc.deviance;
  out.hat_trace = hat_trace(ctx, final_acc.xtwx, lambda_sum);
  return out;
}

InitialFit select_lambda0(const ModelContext& ctx, int grid_size, bool per_block_refine,
                          int threads, const std::vector<double>* grid_override) {
  const int blocks = ctx.q() + 1;
  const double n_obs = static_cast<double>(ctx.data->total_values());

  // Data-driven scale from the initialization weights.
  const PooledAccum init = accumulate_pooled(ctx, nullptr, threads);
  const double s_trace = ctx.penalty.trace_full();
  const double lambda_ref = std::max(init.xtwx.trace() / std::max(s_trace, 1e-300), 1e-300);

  std::vector<double> grid;  // shared lambda values on the sum scale
  if (grid_override && !grid_override->empty()) {
    grid = *grid_override;
  } else {
    if (grid_size < 2) throw validation_error("select_lambda0: grid must have >= 2 points");
    const double lo = std::log(1e-4), hi = std::log(1e4);
    for (int g = 0; g < grid_size; ++g)
      grid.push_back(lambda_ref * std::exp(lo + (hi - lo) * g / (grid_size - 1)));
  }

  InitialFit out;
  double best_score = std::numeric_limits<double>::max();
  Eigen::VectorXd best_lambda_sum;
  PirlsResult best_fit;
  Eigen::VectorXd warm;
  int failures = 0;

  auto evaluate = [&](const Eigen::VectorXd& lambda_sum) -> double {
    const Eigen::VectorXd lambda_avg = lambda_sum / ctx.N();
    PirlsResult fit;
    try {
      fit = pirls_fit(ctx, lambda_avg, threads, warm.size() ? &warm : nullptr);
    } catch (const numeric_error&) {
      ++failures;
      return std::numeric_limits<double>::max();
    }
    warm = fit.theta;
    const double denom = n_obs - fit.hat_trace;
    const double score = n_obs * fit.deviance / (denom * denom);
    // Ties broken toward the smoother fit: candidates come in increasing
    // lambda order and >= keeps the later one only when strictly better
    // is not available.
    if (score <= best_score) {
      best_score = score;
      best_lambda_sum = lambda_sum;
      best_fit = fit;
    }
    return score;
  };

  for (double lam : grid) {
    const double score = evaluate(Eigen::VectorXd::Constant(blocks, lam));
    out.gcv_trace.emplace_back(lam / ctx.N(), score);
  }
  if (!best_lambda_sum.size())
    throw numeric_error("select_lambda0: every grid point produced a singular system");

  if (per_block_refine && blocks > 1) {
    const std::vector<double> local = {0.25, 0.5, 1.0, 2.0, 4.0};
    for (int r = 0; r < blocks; ++r) {
      Eigen::VectorXd lambda = best_lambda_sum;
      const double center = lambda[r];
      for (double mult : local) {
        lambda[r] = center * mult;
        evaluate(lambda);
      }
    }
  }

  out.theta0 = best_fit.theta;
  out.lambda0 = best_lambda_sum / ctx.N();
  out.converged = best_fit.converged;
  out.iterations = best_fit.iterations;
  out.deviance = best_fit.deviance;
  out.eta_clamps = best_fit.eta_clamps;

  // Dispersion at the selected fit.
  const Eigen::MatrixXd curves = ctx.coefficient_curves(out.theta0);
  double pearson_sq = 0.0;
  for (int i = 0; i < ctx.N(); ++i) {
    const LinkEval link = evaluate_link(ctx.family, ctx.linear_predictor(i, curves));
    pearson_sq +=
        pearson_residuals(ctx.family, ctx.data->clusters[i].y.array(), link.mu).matrix().squaredNorm();
  }
  out.phi = estimate_dispersion(ctx.family, pearson_sq, ctx.data->total_values(), ctx.p());
  return out;
}

}  // namespace fgee
