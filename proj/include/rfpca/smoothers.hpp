#pragma once

// Kernel weights and the local estimators: local linear M-mean, local MAD,
// local M-slope through the origin, and the gridded surface smoother.

#include <Eigen/Dense>
#include <span>
#include <vector>

#include "rfpca/robust_kernels.hpp"

namespace rfpca {

/// Epanechnikov kernel 0.75 (1 - u^2) on [-1, 1].
inline double epanechnikov(double u) { return std::abs(u) < 1.0 ? 0.75 * (1.0 - u * u) : 0.0; }

struct Observation {
  double t = 0.0;
  double x = 0.0;
};

/// Within-curve pair of centered observations. The "cond" member sits near
/// the conditioning time s0, the "resp" member near the target time t0.
struct ObservationPair {
  double x_cond = 0.0;
  double x_resp = 0.0;
  double t_cond = 0.0;
  double t_resp = 0.0;
};

/// A local fit needs `min_support` points with positive kernel weight;
/// otherwise the bandwidth grows by `widen_factor`, at most `max_widenings`
/// times, before NoLocalData is raised.
struct WindowOptions {
  int min_support = 5;
  double widen_factor = 1.5;
  int max_widenings = 4;
};

struct IrlsOptions {
  double tolerance = 1e-8;
  int max_iterations = 100;
  bool record_objective = false;
};

struct LocalFitDiagnostics {
  int support = 0;
  double bandwidth = 0.0;  // after widening
  double scale = 0.0;      // preliminary scale used
  int iterations = 0;
  bool converged = false;
  bool singular_design = false;
  bool degenerate_scale = false;
  std::vector<double> objective;  // filled when IrlsOptions::record_objective
};

/// Normalized kernel weights K((t_i - t0)/h) / sum_j K((t_j - t0)/h).
std::vector<double> kernel_weights(std::span<const double> times, double t0, double h);

/// Smallest widened bandwidth giving at least `min_support` points inside
/// the open window (t0 - h, t0 + h).
double resolve_bandwidth(std::span<const Observation> data, double t0, double h,
                         const WindowOptions& window);

struct LocalScale {
  double scale = 0.0;
  bool degenerate = false;
  int support = 0;
};

/// kappa^-1 * MAD of the values with |t - t0| <= h.
LocalScale local_mad_scale(std::span<const Observation> data, double t0, double h);

struct LocalMeanFit {
  double intercept = 0.0;  // estimate of mu(t0)
  double slope = 0.0;      // coefficient on (t0 - t)
  LocalFitDiagnostics diagnostics;
};

/// Kernel-weighted local linear M-fit of x on (1, t0 - t) with residuals
/// standardized by `sigma`. Square family gives weighted least squares.
LocalMeanFit local_linear_m_mean(std::span<const Observation> data, double t0, double h,
                                 const RhoFamily& family, double sigma,
                                 const WindowOptions& window = {}, const IrlsOptions& irls = {});

struct LocalSlopeFit {
  double slope = 0.0;
  double preliminary_slope = 0.0;
  LocalFitDiagnostics diagnostics;
};

/// Local M-regression through the origin of x_resp on x_cond with product
/// kernel weights K((t_resp - t0)/h) K((t_cond - s0)/h).
LocalSlopeFit local_m_slope(std::span<const ObservationPair> pairs, double t0, double s0, double h,
                            const RhoFamily& family, const WindowOptions& window = {},
                            const IrlsOptions& irls = {});

/// Local linear smoother with product Epanechnikov kernel on a square grid,
/// bandwidth in grid steps. NaN cells are treated as missing and filled.
/// Reproduces affine surfaces exactly.
Eigen::MatrixXd bivariate_smooth(const Eigen::MatrixXd& raw, double bandwidth_steps = 2.0);

/// One-dimensional local linear smoother on an equispaced grid.
std::vector<double> smooth_curve(std::span<const double> values, double bandwidth_steps = 2.0);

}  // namespace rfpca
