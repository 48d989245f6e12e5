#include "fgee/basis.hpp"

#include <cmath>
#include <string>

#include "fgee/errors.hpp"

namespace fgee {

BasisSpec BasisSpec::from_knot_count(int knots, bool count_is_basis_dim, int degree,
                                     int penalty_order, double s_min, double s_max) {
  BasisSpec spec;
  spec.degree = degree;
  spec.penalty_order = penalty_order;
  spec.s_min = s_min;
  spec.s_max = s_max;
  spec.num_interior_knots = count_is_basis_dim ? knots - degree - 1 : knots;
  return spec;
}

namespace {

void validate_spec(const BasisSpec& spec) {
  if (spec.degree < 0) throw validation_error("basis: degree must be >= 0");
  if (spec.num_interior_knots < 1)
    throw validation_error("basis: need at least one interior knot");
  if (!(spec.s_max > spec.s_min)) throw validation_error("basis: empty domain");
  if (spec.penalty_order >= spec.num_basis())
    throw validation_error("basis: penalty order " + std::to_string(spec.penalty_order) +
                           " >= basis dimension " + std::to_string(spec.num_basis()));
}

/// Open-uniform knot vector: s_min repeated degree+1 times, equally spaced
/// interior knots, s_max repeated degree+1 times.
Eigen::VectorXd make_knots(const BasisSpec& spec) {
  const int d = spec.degree;
  const int k = spec.num_interior_knots;
  Eigen::VectorXd knots(k + 2 * (d + 1));
  const double h = (spec.s_max - spec.s_min) / (k + 1);
  int idx = 0;
  for (int i = 0; i <= d; ++i) knots[idx++] = spec.s_min;
  for (int i = 1; i <= k; ++i) knots[idx++] = spec.s_min + i * h;
  for (int i = 0; i <= d; ++i) knots[idx++] = spec.s_max;
  return knots;
}

}  // namespace

BasisMatrix build_basis(const BasisSpec& spec, const Eigen::VectorXd& grid) {
  validate_spec(spec);
  const int L = static_cast<int>(grid.size());
  if (L == 0) throw validation_error("basis: empty grid");
  for (int l = 0; l < L; ++l) {
    if (grid[l] < spec.s_min || grid[l] > spec.s_max)
      throw validation_error("basis: grid point " + std::to_string(grid[l]) +
                             " outside domain [" + std::to_string(spec.s_min) + ", " +
                             std::to_string(spec.s_max) + "]");
    if (l > 0 && !(grid[l] > grid[l - 1]))
      throw validation_error("basis: grid must be strictly increasing");
  }

  const int d = spec.degree;
  const int m = spec.num_basis();
  const Eigen::VectorXd knots = make_knots(spec);

  BasisMatrix out;
  out.grid = grid;
  out.degree = d;
  out.values = Eigen::MatrixXd::Zero(L, m);
  out.band = Eigen::MatrixXd::Zero(L, d + 1);
  out.first = Eigen::VectorXi::Zero(L);

  std::vector<double> left(d + 1), right(d + 1), N(d + 1);
  for (int l = 0; l < L; ++l) {
    const double s = grid[l];
    // Knot span: largest i with knots[i] <= s < knots[i+1]; the right
    // boundary clamps into the last nonempty span.
    int span = d;
    const int last = m - 1;  // index of last nonempty span start
    while (span < last && s >= knots[span + 1]) ++span;

    // Cox-de Boor: all d+1 nonzero basis values on this span.
    N[0] = 1.0;
    for (int j = 1; j <= d; ++j) {
      left[j] = s - knots[span + 1 - j];
      right[j] = knots[span + j] - s;
      double saved = 0.0;
      for (int r = 0; r < j; ++r) {
        const double tmp = N[r] / (right[r + 1] + left[j - r]);
        N[r] = saved + right[r + 1] * tmp;
        saved = left[j - r] * tmp;
      }
      N[j] = saved;
    }

    const int first_col = span - d;
    out.first[l] = first_col;
    for (int j = 0; j <= d; ++j) {
      out.band(l, j) = N[j];
      out.values(l, first_col + j) = N[j];
    }
  }
  return out;
}

PenaltyMatrix build_penalty(const BasisSpec& spec, int q) {
  validate_spec(spec);
  if (q < 0) throw validation_error("penalty: q must be >= 0");
  const int m = spec.num_basis();
  const int k = spec.penalty_order;
  if (k >= m)
    throw validation_error("penalty: order " + std::to_string(k) + " >= basis dimension " +
                           std::to_string(m));

  // D_k: k-th order forward differences, (m-k) x m.
  Eigen::MatrixXd D = Eigen::MatrixXd::Identity(m, m);
  for (int step = 0; step < k; ++step) {
    const int rows = static_cast<int>(D.rows());
    Eigen::MatrixXd next(rows - 1, m);
    for (int r = 0; r + 1 < rows; ++r) next.row(r) = D.row(r + 1) - D.row(r);
    D = std::move(next);
  }

  PenaltyMatrix out;
  out.block = D.transpose() * D;
  out.order = k;
  out.num_blocks = q + 1;
  return out;
}

Eigen::VectorXd PenaltyMatrix::apply(const Eigen::VectorXd& lambda,
                                     const Eigen::VectorXd& theta) const {
  const int m = block_dim();
  if (lambda.size() != num_blocks) throw validation_error("penalty: lambda block count mismatch");
  if (theta.size() != dim()) throw validation_error("penalty: theta dimension mismatch");
  Eigen::VectorXd out(dim());
  for (int r = 0; r < num_blocks; ++r)
    out.segment(r * m, m).noalias() = lambda[r] * (block * theta.segment(r * m, m));
  return out;
}

void PenaltyMatrix::add_scaled(const Eigen::VectorXd& lambda, double scale,
                               Eigen::MatrixXd& H) const {
  const int m = block_dim();
  if (lambda.size() != num_blocks) throw validation_error("penalty: lambda block count mismatch");
  if (H.rows() != dim() || H.cols() != dim())
    throw validation_error("penalty: matrix dimension mismatch");
  for (int r = 0; r < num_blocks; ++r)
    H.block(r * m, r * m, m, m) += (scale * lambda[r]) * block;
}

Eigen::MatrixXd PenaltyMatrix::full(const Eigen::VectorXd& lambda) const {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(dim(), dim());
  add_scaled(lambda, 1.0, out);
  return out;
}

Eigen::MatrixXd design_rows(const BasisMatrix& basis, const std::vector<CovariateValue>& x) {
  const int L = basis.num_points();
  const int m = basis.num_basis();
  const int q = static_cast<int>(x.size());
  for (const auto& cov : x) {
    if (cov.functional && cov.values.size() != L)
      throw validation_error("design_rows: functional covariate not evaluated on the grid");
  }
  Eigen::MatrixXd X(L, m * (q + 1));
  X.leftCols(m) = basis.values;
  for (int r = 0; r < q; ++r)
    for (int l = 0; l < L; ++l) X.row(l).segment((r + 1) * m, m) = x[r].at(l) * basis.values.row(l);
  return X;
}

Eigen::MatrixXd design_rows(const BasisMatrix& basis, const Eigen::VectorXd& scalar_covariates) {
  std::vector<CovariateValue> x;
  x.reserve(scalar_covariates.size());
  for (int r = 0; r < scalar_covariates.size(); ++r)
    x.push_back(CovariateValue::make_scalar(scalar_covariates[r]));
  return design_rows(basis, x);
}

}  // namespace fgee
