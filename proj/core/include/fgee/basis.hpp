#pragma once

#include <Eigen/Dense>
#include <vector>

namespace fgee {

/// B-spline layout for one functional coefficient. Knots are open-uniform:
/// boundary knots repeated degree+1 times, interior knots equally spaced,
/// so num_basis() = num_interior_knots + degree + 1.
struct BasisSpec {
  int degree = 3;
  int num_interior_knots = 10;
  double s_min = 0.0;
  double s_max = 1.0;
  int penalty_order = 1;

  int num_basis() const { return num_interior_knots + degree + 1; }
  /// Interprets a user-facing "knots" count as either interior knots
  /// (default) or the basis dimension itself.
  static BasisSpec from_knot_count(int knots, bool count_is_basis_dim, int degree = 3,
                                   int penalty_order = 1, double s_min = 0.0, double s_max = 1.0);
};

/// Basis evaluated on a grid. `values` is the dense L x m matrix; `band`
/// holds the degree+1 values that can be nonzero in row l, starting at
/// column first[l]. The band view is what the estimation kernels use.
struct BasisMatrix {
  Eigen::VectorXd grid;
  Eigen::MatrixXd values;
  Eigen::MatrixXd band;
  Eigen::VectorXi first;
  int degree = 3;

  int num_points() const { return static_cast<int>(grid.size()); }
  int num_basis() const { return static_cast<int>(values.cols()); }
};

/// Block-diagonal difference penalty: q+1 identical m x m blocks
/// D_k^T D_k. Stored as the single block; Lambda is a per-block scalar
/// vector, expanded on demand.
struct PenaltyMatrix {
  Eigen::MatrixXd block;
  int order = 1;
  int num_blocks = 1;

  int block_dim() const { return static_cast<int>(block.rows()); }
  int dim() const { return num_blocks * block_dim(); }

  /// Lambda*S*theta with lambda given per coefficient block.
  Eigen::VectorXd apply(const Eigen::VectorXd& lambda, const Eigen::VectorXd& theta) const;
  /// H += scale * Lambda * S.
  void add_scaled(const Eigen::VectorXd& lambda, double scale, Eigen::MatrixXd& H) const;
  /// Dense p x p Lambda*S (test/oracle use).
  Eigen::MatrixXd full(const Eigen::VectorXd& lambda) const;
  double trace_full() const { return num_blocks * block.trace(); }
};

/// Evaluates the basis by Cox-de Boor recursion. Grid points must be
/// strictly increasing and lie in [s_min, s_max].
BasisMatrix build_basis(const BasisSpec& spec, const Eigen::VectorXd& grid);

/// k-th order forward-difference penalty, one block per coefficient
/// (intercept plus q covariates).
PenaltyMatrix build_penalty(const BasisSpec& spec, int q);

/// One covariate value for a single (cluster, observation) pair: either a
/// scalar or a function evaluated on the outcome grid.
struct CovariateValue {
  bool functional = false;
  double scalar = 0.0;
  Eigen::VectorXd values;

  static CovariateValue make_scalar(double v) { return {false, v, {}}; }
  static CovariateValue make_functional(Eigen::VectorXd v) { return {true, 0.0, std::move(v)}; }
  double at(int l) const { return functional ? values[l] : scalar; }
};

/// Design rows for one observation: [B, x_1 B, ..., x_q B], L x p.
Eigen::MatrixXd design_rows(const BasisMatrix& basis, const std::vector<CovariateValue>& x);
Eigen::MatrixXd design_rows(const BasisMatrix& basis, const Eigen::VectorXd& scalar_covariates);

}  // namespace fgee
