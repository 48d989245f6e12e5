#include "fgee/stats.hpp"

#include <algorithm>
#include <cmath>

#include "fgee/errors.hpp"

namespace fgee::stats {

double norm_pdf(double x) {
  static const double inv_sqrt_2pi = 0.3989422804014327;
  return inv_sqrt_2pi * std::exp(-0.5 * x * x);
}

double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

double norm_quantile(double p) {
  // AS 241 algorithm PPND16 (Wichura 1988).
  if (!(p > 0.0 && p < 1.0)) throw validation_error("norm_quantile: p outside (0,1)");
  const double q = p - 0.5;
  double r;
  if (std::abs(q) <= 0.425) {
    r = 0.180625 - q * q;
    return q *
           (((((((2.5090809287301226727e3 * r + 3.3430575583588128105e4) * r +
                 6.7265770927008700853e4) *
                    r +
                4.5921953931549871457e4) *
                   r +
               1.3731693765509461125e4) *
                  r +
              1.9715909503065514427e3) *
                 r +
             1.3314166789178437745e2) *
                r +
            3.3871328727963666080e0) /
           (((((((5.2264952788528545610e3 * r + 2.8729085735721942674e4) * r +
                 3.9307895800092710610e4) *
                    r +
                2.1213794301586595867e4) *
                   r +
               5.3941960214247511077e3) *
                  r +
              6.8718700749205790830e2) *
                 r +
             4.2313330701600911252e1) *
                r +
            1.0);
  }
  r = (q < 0.0) ? p : 1.0 - p;
  r = std::sqrt(-std::log(r));
  double val;
  if (r <= 5.0) {
    r -= 1.6;
    val = (((((((7.74545014278341407640e-4 * r + 2.27238449892691845833e-2) * r +
                2.41780725177450611770e-1) *
                   r +
               1.27045825245236838258e0) *
                  r +
              3.64784832476320460504e0) *
                 r +
             5.76949722146069140550e0) *
                r +
            4.63033784615654529590e0) *
               r +
           1.42343711074968357734e0) /
          (((((((1.05075007164441684324e-9 * r + 5.47593808499534494600e-4) * r +
                1.51986665636164571966e-2) *
                   r +
               1.48103976427480074590e-1) *
                  r +
              6.89767334985100004550e-1) *
                 r +
             1.67638483018380384940e0) *
                r +
            2.05319162663775882187e0) *
               r +
           1.0);
  } else {
    r -= 5.0;
    val = (((((((2.01033439929228813265e-7 * r + 2.71155556874348757815e-5) * r +
                1.24266094738807843860e-3) *
                   r +
               2.65321895265761230930e-2) *
                  r +
              2.96560571828504891230e-1) *
                 r +
             1.78482653991729133580e0) *
                r +
            5.46378491116411436990e0) *
               r +
           6.65790464350110377720e0) /
          (((((((2.04426310338993978564e-15 * r + 1.42151175831644588870e-7) * r +
                1.84631831751005468180e-5) *
                   r +
               7.86869131145613259100e-4) *
                  r +
              1.48753612908506148525e-2) *
                 r +
             1.36929880922735805310e-1) *
                r +
            5.99832206555887937690e-1) *
               r +
           1.0);
  }
  return (q < 0.0) ? -val : val;
}

double bvn_cdf(double h, double k, double r) {
  // Drezner & Wesolowsky (1990) as refined by Genz: integrate the
  // correlation derivative with Gauss-Legendre nodes.
  static const double w[] = {0.1713244923791705, 0.3607615730481384, 0.4679139345726904};
  static const double x[] = {0.9324695142031522, 0.6612093864662647, 0.2386191860831970};

  // Upper-tail convention internally: P(Z1 > -h, Z2 > -k) = P(Z1 <= h, Z2 <= k).
  double hh = -h, kk = -k;
  double bvn = 0.0;
  if (std::abs(r) < 0.925) {
    const double hs = (hh * hh + kk * kk) / 2.0;
    const double asr = std::asin(r);
    for (int i = 0; i < 3; ++i) {
      for (int sign = -1; sign <= 1; sign += 2) {
        const double sn = std::sin(asr * (1.0 + sign * x[i]) / 2.0);
        bvn += w[i] * std::exp((sn * hh * kk - hs) / (1.0 - sn * sn));
      }
    }
    bvn = bvn * asr / (4.0 * M_PI) + norm_cdf(-hh) * norm_cdf(-kk);
  } else {
    if (r < 0.0) {
      kk = -kk;
    }
    if (std::abs(r) < 1.0) {
      const double as = (1.0 - r) * (1.0 + r);
      double a = std::sqrt(as);
      const double bs = (hh - kk) * (hh - kk);
      const double c = (4.0 - hh * kk) / 8.0;
      const double d = (12.0 - hh * kk) / 16.0;
      double asq = -(bs / as + hh * kk) / 2.0;
      if (asq > -100.0) {
        bvn = a * std::exp(asq) *
              (1.0 - c * (bs - as) * (1.0 - d * bs / 5.0) / 3.0 + c * d * as * as / 5.0);
      }
      if (-hh * kk < 100.0) {
        const double b = std::sqrt(bs);
        bvn -= std::exp(-hh * kk / 2.0) * std::sqrt(2.0 * M_PI) * norm_cdf(-b / a) * b *
               (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
      }
      a /= 2.0;
      for (int i = 0; i < 3; ++i) {
        for (int sign = -1; sign <= 1; sign += 2) {
          const double xs = a * (1.0 + sign * x[i]);
          const double xs2 = xs * xs;
          const double rs = std::sqrt(1.0 - xs2);
          asq = -(bs / xs2 + hh * kk) / 2.0;
          if (asq > -100.0) {
            bvn += a * w[i] * std::exp(asq) *
                   (std::exp(-hh * kk * (1.0 - rs) / (2.0 * (1.0 + rs))) / rs -
                    (1.0 + c * xs2 * (1.0 + d * xs2)));
          }
        }
      }
      bvn = -bvn / (2.0 * M_PI);
    }
    if (r > 0.0) {
      bvn += norm_cdf(-std::max(hh, kk));
    } else {
      bvn = -bvn;
      if (kk > hh) bvn += norm_cdf(kk) - norm_cdf(hh);
    }
  }
  return bvn;
}

double empirical_quantile(std::vector<double>& v, double p) {
  if (v.empty()) throw validation_error("empirical_quantile: empty sample");
  const std::size_t n = v.size();
  std::size_t j = static_cast<std::size_t>(std::ceil(p * static_cast<double>(n)));
  if (j < 1) j = 1;
  if (j > n) j = n;
  std::nth_element(v.begin(), v.begin() + (j - 1), v.end());
  return v[j - 1];
}

std::uint64_t split_seed(std::uint64_t master, std::uint64_t stream) {
  std::uint64_t z = master + 0x9e3779b97f4a7c15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace fgee::stats
