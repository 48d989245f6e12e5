#pragma once

#include <Eigen/Dense>

#include "fgee/basis.hpp"
#include "fgee/dataset.hpp"
#include "fgee/glm.hpp"

namespace fgee {

/// Bundles the dataset with the basis, penalty, and family. Design
/// matrices X_{i,j} = [B, x_1 B, ..., x_q B] are never materialized: the
/// row at grid index l factors as c_{i,j}(l) (x) b_l, with c the
/// (q+1)-vector of covariates (intercept first) and b_l the degree+1
/// nonzero basis values, and every kernel works on that factorization.
struct ModelContext {
  const FunctionalDataset* data = nullptr;
  BasisMatrix basis;
  PenaltyMatrix penalty;
  Family family;

  int q() const { return data->q; }
  int m() const { return basis.num_basis(); }
  int p() const { return m() * (q() + 1); }
  int L() const { return basis.num_points(); }
  int N() const { return data->num_clusters(); }

  /// B * theta_r per coefficient block; column r is the curve of block r.
  Eigen::MatrixXd coefficient_curves(const Eigen::VectorXd& theta) const;

  /// eta_{i,j}(s_l) for cluster i, as an n_i x L array.
  Eigen::ArrayXXd linear_predictor(int i, const Eigen::MatrixXd& curves) const;

  /// Covariate factor rows c_{i,j}(l) for cluster i at grid index l:
  /// n_i x (q+1), intercept first.
  void covariate_rows(int i, int l, Eigen::MatrixXd& C) const;

  /// Dense X_i (n_i L x p), observation-major row order
  /// (j=1 rows for all l, then j=2, ...). Oracle/test use only.
  Eigen::MatrixXd dense_design(int i) const;
};

ModelContext make_context(const FunctionalDataset& data, const BasisSpec& spec,
                          const Family& family);

}  // namespace fgee
