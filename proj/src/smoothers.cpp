#include "rfpca/smoothers.hpp"

#include <cmath>
#include <limits>
#include <string>

#include "rfpca/errors.hpp"

namespace rfpca {

std::vector<double> kernel_weights(std::span<const double> times, double t0, double h) {
  if (!(h > 0.0)) throw Error(ErrorCode::InvalidArgument, "bandwidth must be positive");
  std::vector<double> w(times.size());
  double total = 0.0;
  for (std::size_t i = 0; i < times.size(); ++i) {
    w[i] = epanechnikov((times[i] - t0) / h);
    total += w[i];
  }
  if (!(total > 0.0)) {
    throw Error(ErrorCode::NoLocalData, "no observation within bandwidth of t0=" + std::to_string(t0));
  }
  for (double& x : w) x /= total;
  return w;
}

namespace {

int window_count(std::span<const Observation> data, double t0, double h) {
  int n = 0;
  for (const auto& o : data) n += std::abs(o.t - t0) < h ? 1 : 0;
  return n;
}

int pair_window_count(std::span<const ObservationPair> pairs, double t0, double s0, double h) {
  int n = 0;
  for (const auto& p : pairs) n += (std::abs(p.t_resp - t0) < h && std::abs(p.t_cond - s0) < h) ? 1 : 0;
  return n;
}

template <class CountFn>
double widen(double h, const WindowOptions& window, CountFn count, const std::string& where) {
  if (!(h > 0.0)) throw Error(ErrorCode::InvalidArgument, "bandwidth must be positive");
  for (int k = 0; k <= window.max_widenings; ++k) {
    if (count(h) >= window.min_support) return h;
    if (k < window.max_widenings) h *= window.widen_factor;
  }
  throw Error(ErrorCode::NoLocalData, "fewer than " + std::to_string(window.min_support) +
                                          " points near " + where + " after widening");
}

// Kernel-weighted offset of t0 from the window's design center, in design
// standard deviations. Large values mean the local line is extrapolated.
double extrapolation_ratio(std::span<const Observation> data, double t0, double h) {
  double sw = 0.0, sd = 0.0, sdd = 0.0;
  for (const auto& o : data) {
    const double k = epanechnikov((o.t - t0) / h);
    const double d = (o.t - t0) / h;
    sw += k;
    sd += k * d;
    sdd += k * d * d;
  }
  if (!(sw > 0.0)) return std::numeric_limits<double>::infinity();
  const double mean = sd / sw;
  const double var = std::max(sdd / sw - mean * mean, 0.0);
  return var > 0.0 ? std::abs(mean) / std::sqrt(var) : std::numeric_limits<double>::infinity();
}

constexpr double kMaxExtrapolation = 3.0;

}  // namespace

double resolve_bandwidth(std::span<const Observation> data, double t0, double h,
                         const WindowOptions& window) {
  const double limit = h * std::pow(window.widen_factor, window.max_widenings) * (1.0 + 1e-12);
  h = widen(h, window, [&](double hh) { return window_count(data, t0, hh); },
            "t0=" + std::to_string(t0));
  // Clustered one-sided windows are widened too, within the same budget.
  while (extrapolation_ratio(data, t0, h) > kMaxExtrapolation && h * window.widen_factor <= limit) {
    h *= window.widen_factor;
  }
  return h;
}

LocalScale local_mad_scale(std::span<const Observation> data, double t0, double h) {
  std::vector<double> values;
  for (const auto& o : data) {
    if (std::abs(o.t - t0) <= h) values.push_back(o.x);
  }
  if (values.empty()) {
    throw Error(ErrorCode::NoLocalData, "empty MAD window at t0=" + std::to_string(t0));
  }
  LocalScale out;
  out.support = static_cast<int>(values.size());
  out.scale = mad(values);
  out.degenerate = out.scale == 0.0;
  return out;
}

LocalMeanFit local_linear_m_mean(std::span<const Observation> data, double t0, double h,
                                 const RhoFamily& family, double sigma,
                                 const WindowOptions& window, const IrlsOptions& irls) {
  const bool least_squares = family.kind == RhoKind::Square;
  if (least_squares) sigma = 1.0;
  if (!(sigma > 0.0)) throw Error(ErrorCode::InvalidArgument, "preliminary scale must be positive");

  LocalMeanFit fit;
  auto& diag = fit.diagnostics;
  diag.bandwidth = resolve_bandwidth(data, t0, h, window);
  diag.scale = sigma;

  std::vector<double> x, d, w;
  double total = 0.0;
  for (const auto& o : data) {
    const double k = epanechnikov((o.t - t0) / diag.bandwidth);
    if (k > 0.0) {
      x.push_back(o.x);
      d.push_back(t0 - o.t);
      w.push_back(k);
      total += k;
    }
  }
  for (double& wi : w) wi /= total;
  diag.support = static_cast<int>(x.size());
  const std::size_t n = x.size();

  double dbar = 0.0;
  for (std::size_t i = 0; i < n; ++i) dbar += w[i] * d[i];
  double dvar = 0.0;
  for (std::size_t i = 0; i < n; ++i) dvar += w[i] * (d[i] - dbar) * (d[i] - dbar);
  diag.singular_design = dvar <= 1e-12 * diag.bandwidth * diag.bandwidth;

  auto objective = [&](double b0, double b1) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += w[i] * rho(family, (x[i] - b0 - b1 * d[i]) / sigma);
    return acc;
  };

  double b0 = weighted_median(x, w);
  double b1 = 0.0;
  if (irls.record_objective) diag.objective.push_back(objective(b0, b1));

  for (int it = 1; it <= irls.max_iterations; ++it) {
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, sx = 0.0, sdx = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = w[i] * irls_weight(family, (x[i] - b0 - b1 * d[i]) / sigma);
      s0 += v;
      s1 += v * d[i];
      s2 += v * d[i] * d[i];
      sx += v * x[i];
      sdx += v * d[i] * x[i];
    }
    diag.iterations = it;
    if (!(s0 > 0.0)) break;  // every residual rejected; keep the last iterate

    double n0, n1;
    const double det = s0 * s2 - s1 * s1;
    if (diag.singular_design || det <= 1e-12 * s0 * s2) {
      n0 = sx / s0;
      n1 = 0.0;
    } else {
      n0 = (s2 * sx - s1 * sdx) / det;
      n1 = (s0 * sdx - s1 * sx) / det;
    }
    const double change = std::abs(n0 - b0) + diag.bandwidth * std::abs(n1 - b1);
    const double size = std::abs(n0) + diag.bandwidth * std::abs(n1) + sigma;
    b0 = n0;
    b1 = n1;
    if (irls.record_objective) diag.objective.push_back(objective(b0, b1));
    if (change <= irls.tolerance * size) {
      diag.converged = true;
      break;
    }
  }
  if (!diag.converged) {
    throw Error(ErrorCode::NoConvergence, "local mean IRLS did not converge at t0=" + std::to_string(t0));
  }
  fit.intercept = b0;
  fit.slope = b1;
  return fit;
}

LocalSlopeFit local_m_slope(std::span<const ObservationPair> pairs, double t0, double s0, double h,
                            const RhoFamily& family, const WindowOptions& window,
                            const IrlsOptions& irls) {
  LocalSlopeFit fit;
  auto& diag = fit.diagnostics;
  diag.bandwidth = widen(h, window, [&](double hh) { return pair_window_count(pairs, t0, s0, hh); },
                         "(t0,s0)=(" + std::to_string(t0) + "," + std::to_string(s0) + ")");

  std::vector<double> xc, xr, k;
  for (const auto& p : pairs) {
    const double kk = epanechnikov((p.t_resp - t0) / diag.bandwidth) *
                      epanechnikov((p.t_cond - s0) / diag.bandwidth);
    if (kk > 0.0) {
      xc.push_back(p.x_cond);
      xr.push_back(p.x_resp);
      k.push_back(kk);
    }
  }
  const std::size_t n = xc.size();
  diag.support = static_cast<int>(n);

  std::vector<double> ratios;
  ratios.reserve(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (std::abs(xc[i]) >= 1e-12) ratios.push_back(xr[i] / xc[i]);
  }
  const double beta0 = ratios.empty() ? 0.0 : median(ratios);
  fit.preliminary_slope = beta0;

  std::vector<double> r(n);
  for (std::size_t i = 0; i < n; ++i) r[i] = xr[i] - beta0 * xc[i];
  double scale = mad(r);
  if (scale == 0.0) {
    double mean_abs = 0.0;
    for (double ri : r) mean_abs += std::abs(ri);
    if (mean_abs == 0.0) {
      diag.degenerate_scale = true;
      diag.converged = true;
      fit.slope = beta0;
      return fit;
    }
    diag.degenerate_scale = true;
    scale = mean_abs / static_cast<double>(n) / kMadConsistency;
  }
  diag.scale = scale;

  double xc_ms = 0.0;
  for (double v : xc) xc_ms += v * v;
  xc_ms /= static_cast<double>(n);
  const double beta_unit = xc_ms > 0.0 ? scale / std::sqrt(xc_ms) : 1.0;

  auto objective = [&](double beta) {
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) acc += k[i] * rho(family, (xr[i] - beta * xc[i]) / scale);
    return acc;
  };

  double beta = beta0;
  if (irls.record_objective) diag.objective.push_back(objective(beta));
  for (int it = 1; it <= irls.max_iterations; ++it) {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double v = k[i] * irls_weight(family, (xr[i] - beta * xc[i]) / scale);
      num += v * xc[i] * xr[i];
      den += v * xc[i] * xc[i];
    }
    diag.iterations = it;
    if (!(den > 0.0)) break;
    const double next = num / den;
    const double change = std::abs(next - beta);
    beta = next;
    if (irls.record_objective) diag.objective.push_back(objective(beta));
    if (change <= irls.tolerance * (std::abs(beta) + beta_unit)) {
      diag.converged = true;
      break;
    }
  }
  if (!diag.converged) {
    throw Error(ErrorCode::NoConvergence, "local slope IRLS did not converge");
  }
  fit.slope = beta;
  return fit;
}

namespace {

// Weighted local linear fit on integer offsets; returns NaN when the design
// cannot support an intercept and two slopes.
double local_linear_cell(const Eigen::MatrixXd& raw, int i, int j, double hb) {
  const int rows = static_cast<int>(raw.rows());
  const int cols = static_cast<int>(raw.cols());
  const int reach = static_cast<int>(std::ceil(hb)) - 1;
  Eigen::Matrix3d xtx = Eigen::Matrix3d::Zero();
  Eigen::Vector3d xty = Eigen::Vector3d::Zero();
  int used = 0;
  for (int p = std::max(0, i - reach); p <= std::min(rows - 1, i + reach); ++p) {
    const double kp = epanechnikov((p - i) / hb);
    if (kp <= 0.0) continue;
    for (int q = std::max(0, j - reach); q <= std::min(cols - 1, j + reach); ++q) {
      const double y = raw(p, q);
      if (std::isnan(y)) continue;
      const double wgt = kp * epanechnikov((q - j) / hb);
      if (wgt <= 0.0) continue;
      const Eigen::Vector3d z(1.0, p - i, q - j);
      xtx.noalias() += wgt * z * z.transpose();
      xty.noalias() += wgt * y * z;
      ++used;
    }
  }
  if (used < 3) return std::numeric_limits<double>::quiet_NaN();
  Eigen::FullPivLU<Eigen::Matrix3d> lu(xtx);
  lu.setThreshold(1e-10);
  if (lu.rank() < 3) return std::numeric_limits<double>::quiet_NaN();
  return lu.solve(xty)(0);
}

double local_linear_point(std::span<const double> values, int i, double hb) {
  const int n = static_cast<int>(values.size());
  const int reach = static_cast<int>(std::ceil(hb)) - 1;
  double s0 = 0, s1 = 0, s2 = 0, sy = 0, sdy = 0;
  int used = 0;
  for (int p = std::max(0, i - reach); p <= std::min(n - 1, i + reach); ++p) {
    if (std::isnan(values[p])) continue;
    const double wgt = epanechnikov((p - i) / hb);
    if (wgt <= 0.0) continue;
    const double d = p - i;
    s0 += wgt;
    s1 += wgt * d;
    s2 += wgt * d * d;
    sy += wgt * values[p];
    sdy += wgt * d * values[p];
    ++used;
  }
  if (used < 2) return std::numeric_limits<double>::quiet_NaN();
  const double det = s0 * s2 - s1 * s1;
  if (det <= 1e-10 * s0 * s2) return std::numeric_limits<double>::quiet_NaN();
  return (s2 * sy - s1 * sdy) / det;
}

}  // namespace

Eigen::MatrixXd bivariate_smooth(const Eigen::MatrixXd& raw, double bandwidth_steps) {
  if (!(bandwidth_steps > 0.0)) throw Error(ErrorCode::InvalidArgument, "smoothing bandwidth must be positive");
  if (raw.size() == 0 || raw.array().isNaN().all()) {
    throw Error(ErrorCode::AllMissing, "surface has no observed cells");
  }
  const double max_h = 2.0 * static_cast<double>(std::max(raw.rows(), raw.cols())) + 2.0;
  Eigen::MatrixXd out(raw.rows(), raw.cols());
  for (int i = 0; i < raw.rows(); ++i) {
    for (int j = 0; j < raw.cols(); ++j) {
      double hb = bandwidth_steps;
      double v = local_linear_cell(raw, i, j, hb);
      while (std::isnan(v) && hb < max_h) {
        hb *= 1.5;
        v = local_linear_cell(raw, i, j, hb);
      }
      if (std::isnan(v)) {
        // Collinear observed cells: fall back to the observed mean.
        v = raw.array().isNaN().select(0.0, raw).sum() /
            static_cast<double>((!raw.array().isNaN()).count());
      }
      out(i, j) = v;
    }
  }
  return out;
}

std::vector<double> smooth_curve(std::span<const double> values, double bandwidth_steps) {
  if (!(bandwidth_steps > 0.0)) throw Error(ErrorCode::InvalidArgument, "smoothing bandwidth must be positive");
  const double max_h = 2.0 * static_cast<double>(values.size()) + 2.0;
  std::vector<double> out(values.size());
  for (int i = 0; i < static_cast<int>(values.size()); ++i) {
    double hb = bandwidth_steps;
    double v = local_linear_point(values, i, hb);
    while (std::isnan(v) && hb < max_h) {
      hb *= 1.5;
      v = local_linear_point(values, i, hb);
    }
    if (std::isnan(v)) throw Error(ErrorCode::AllMissing, "curve has fewer than two observed points");
    out[i] = v;
  }
  return out;
}

}  // namespace rfpca
