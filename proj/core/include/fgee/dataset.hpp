#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "fgee/basis.hpp"

namespace fgee {

/// One covariate within a cluster: a value per longitudinal observation,
/// optionally varying along the functional grid.
struct ClusterCovariate {
  bool functional = false;
  Eigen::VectorXd scalar;   // n_i values (used when !functional)
  Eigen::MatrixXd values;   // n_i x L (used when functional)

  double at(int j, int l) const { return functional ? values(j, l) : scalar[j]; }
};

struct Cluster {
  long id = 0;
  Eigen::MatrixXd y;                      // n_i x L
  std::vector<ClusterCovariate> x;        // q entries

  int n() const { return static_cast<int>(y.rows()); }
  /// Covariate r at observation j, grid index l; r == -1 is the intercept.
  double covariate(int r, int j, int l) const { return r < 0 ? 1.0 : x[r].at(j, l); }
  CovariateValue covariate_value(int r, int j) const;
};

/// Long-format longitudinal functional outcomes on a shared grid.
struct FunctionalDataset {
  Eigen::VectorXd grid;
  std::vector<Cluster> clusters;
  int q = 0;

  int num_clusters() const { return static_cast<int>(clusters.size()); }
  int num_points() const { return static_cast<int>(grid.size()); }
  long total_obs() const;     // sum of n_i
  long total_values() const;  // sum of n_i * L
  int max_cluster_size() const;
};

/// Reads the long CSV format: header `cluster_id,obs_index,s,y[,x1..xq]`,
/// one row per (cluster, observation, grid point). obs_index must be
/// consecutive integers within each cluster and every (cluster, obs) pair
/// must cover the full shared grid. Covariates constant across s are
/// stored as scalars; varying ones as functional.
FunctionalDataset read_long_csv(const std::string& path);

void write_long_csv(const FunctionalDataset& data, const std::string& path);

}  // namespace fgee
