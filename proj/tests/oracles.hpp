#pragma once

// Test-only reference computations, independent of the library code paths
// they check.

#include <Eigen/Dense>
#include <cmath>
#include <functional>
#include <random>
#include <vector>

namespace oracle {

/// Root of a monotone function on [lo, hi] by bisection.
inline double bisect(const std::function<double(double)>& f, double lo, double hi, int iters = 200) {
  double flo = f(lo);
  for (int i = 0; i < iters; ++i) {
    const double mid = 0.5 * (lo + hi);
    const double fm = f(mid);
    if ((fm < 0) == (flo < 0)) {
      lo = mid;
      flo = fm;
    } else {
      hi = mid;
    }
  }
  return 0.5 * (lo + hi);
}

/// M-scale by bisection on s for a uniform-weight bisquare (sup = 1).
inline double bisquare_mscale_bisect(const std::vector<double>& r, double c, double b) {
  auto avg_rho = [&](double s) {
    double acc = 0.0;
    for (double x : r) {
      const double u = x / (s * c);
      acc += std::abs(u) >= 1.0 ? 1.0 : 1.0 - std::pow(1.0 - u * u, 3);
    }
    return acc / static_cast<double>(r.size()) - b;
  };
  double hi = 1.0;
  while (avg_rho(hi) > 0) hi *= 2.0;
  return bisect(avg_rho, 1e-12, hi);
}

/// Plain sample covariance of the columns of `x` (rows = draws).
inline Eigen::MatrixXd sample_covariance(const Eigen::MatrixXd& x) {
  const Eigen::RowVectorXd mean = x.colwise().mean();
  const Eigen::MatrixXd c = x.rowwise() - mean;
  return c.transpose() * c / static_cast<double>(x.rows() - 1);
}

inline std::vector<double> gaussian_draws(std::size_t n, unsigned seed, double sd = 1.0) {
  std::mt19937_64 rng(seed);
  std::normal_distribution<double> normal(0.0, sd);
  std::vector<double> out(n);
  for (double& v : out) v = normal(rng);
  return out;
}

}  // namespace oracle
