#include "fgee/model.hpp"

#include "fgee/errors.hpp"

namespace fgee {

Eigen::MatrixXd ModelContext::coefficient_curves(const Eigen::VectorXd& theta) const {
  const int mm = m();
  const int blocks = q() + 1;
  if (theta.size() != p()) throw validation_error("coefficient_curves: theta dimension mismatch");
  Eigen::MatrixXd curves(L(), blocks);
  const int width = basis.degree + 1;
  for (int r = 0; r < blocks; ++r) {
    const auto seg = theta.segment(r * mm, mm);
    for (int l = 0; l < L(); ++l) {
      double acc = 0.0;
      const int f = basis.first[l];
      for (int d = 0; d < width; ++d) acc += basis.band(l, d) * seg[f + d];
      curves(l, r) = acc;
    }
  }
  return curves;
}

Eigen::ArrayXXd ModelContext::linear_predictor(int i, const Eigen::MatrixXd& curves) const {
  const Cluster& cluster = data->clusters[i];
  const int n = cluster.n();
  Eigen::ArrayXXd eta(n, L());
  for (int j = 0; j < n; ++j) {
    for (int l = 0; l < L(); ++l) {
      double acc = curves(l, 0);
      for (int r = 0; r < q(); ++r) acc += cluster.covariate(r, j, l) * curves(l, r + 1);
      eta(j, l) = acc;
    }
  }
  return eta;
}

void ModelContext::covariate_rows(int i, int l, Eigen::MatrixXd& C) const {
  const Cluster& cluster = data->clusters[i];
  const int n = cluster.n();
  C.resize(n, q() + 1);
  for (int j = 0; j < n; ++j) {
    C(j, 0) = 1.0;
    for (int r = 0; r < q(); ++r) C(j, r + 1) = cluster.covariate(r, j, l);
  }
}

Eigen::MatrixXd ModelContext::dense_design(int i) const {
  const Cluster& cluster = data->clusters[i];
  const int n = cluster.n();
  Eigen::MatrixXd X(static_cast<long>(n) * L(), p());
  for (int j = 0; j < n; ++j) {
    std::vector<CovariateValue> x;
    x.reserve(q());
    for (int r = 0; r < q(); ++r) x.push_back(cluster.covariate_value(r, j));
    X.middleRows(static_cast<long>(j) * L(), L()) = design_rows(basis, x);
  }
  return X;
}

ModelContext make_context(const FunctionalDataset& data, const BasisSpec& spec,
                          const Family& family) {
  ModelContext ctx;
  ctx.data = &data;
  ctx.basis = build_basis(spec, data.grid);
  ctx.penalty = build_penalty(spec, data.q);
  ctx.family = family;
  return ctx;
}

}  // namespace fgee
