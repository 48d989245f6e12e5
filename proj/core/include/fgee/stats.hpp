#pragma once

#include <cstdint>
#include <vector>

namespace fgee::stats {

/// Standard normal density.
double norm_pdf(double x);

/// Standard normal CDF via erfc.
double norm_cdf(double x);

/// Inverse standard normal CDF (Wichura's AS 241, double precision).
/// p must lie in (0, 1).
double norm_quantile(double p);

/// P(Z1 <= h, Z2 <= k) for standard bivariate normal with correlation r.
/// Drezner--Wesolowsky Gauss-Legendre scheme, absolute error below 5e-11.
double bvn_cdf(double h, double k, double r);

/// Empirical p-quantile: smallest order statistic x_(j) with j >= ceil(p*n).
/// Reorders v in place.
double empirical_quantile(std::vector<double>& v, double p);

/// splitmix64 step; used to derive independent seeds per stream index so
/// replicate-level RNG is independent of thread scheduling.
std::uint64_t split_seed(std::uint64_t master, std::uint64_t stream);

}  // namespace fgee::stats
