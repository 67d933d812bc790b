#include "rfpca/robust_kernels.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "rfpca/errors.hpp"

namespace rfpca {

double rho(const RhoFamily& family, double x) {
  switch (family.kind) {
    case RhoKind::Huber: {
      const double ax = std::abs(x);
      return ax <= family.c ? 0.5 * x * x : family.c * ax - 0.5 * family.c * family.c;
    }
    case RhoKind::Bisquare: {
      const double u = x / family.c;
      if (std::abs(u) >= 1.0) return 1.0;
      const double v = 1.0 - u * u;
      return 1.0 - v * v * v;
    }
    case RhoKind::Square:
      return x * x;
  }
  return 0.0;
}

double psi(const RhoFamily& family, double x) {
  switch (family.kind) {
    case RhoKind::Huber:
      return std::clamp(x, -family.c, family.c);
    case RhoKind::Bisquare: {
      const double u = x / family.c;
      if (std::abs(u) >= 1.0) return 0.0;
      const double v = 1.0 - u * u;
      return 6.0 * x * v * v / (family.c * family.c);
    }
    case RhoKind::Square:
      return 2.0 * x;
  }
  return 0.0;
}

double irls_weight(const RhoFamily& family, double x) {
  switch (family.kind) {
    case RhoKind::Huber: {
      const double ax = std::abs(x);
      return ax <= family.c ? 1.0 : family.c / ax;
    }
    case RhoKind::Bisquare: {
      const double u = x / family.c;
      if (std::abs(u) >= 1.0) return 0.0;
      const double v = 1.0 - u * u;
      return 6.0 * v * v / (family.c * family.c);
    }
    case RhoKind::Square:
      return 2.0;
  }
  return 0.0;
}

double median(std::vector<double> values) {
  if (values.empty()) throw Error(ErrorCode::InvalidArgument, "median of an empty list");
  const std::size_t n = values.size();
  const auto mid = values.begin() + static_cast<std::ptrdiff_t>(n / 2);
  std::nth_element(values.begin(), mid, values.end());
  const double upper = *mid;
  if (n % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), mid);
  return 0.5 * (lower + upper);
}

double weighted_median(std::span<const double> values, std::span<const double> weights) {
  if (values.empty() || values.size() != weights.size()) {
    throw Error(ErrorCode::InvalidArgument, "weighted_median needs matching nonempty inputs");
  }
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t i, std::size_t j) { return values[i] < values[j]; });
  double total = 0.0;
  for (double w : weights) total += w;
  if (!(total > 0.0)) throw Error(ErrorCode::InvalidArgument, "weights sum to zero");
  const double half = 0.5 * total;
  double cumulative = 0.0;
  for (std::size_t k = 0; k < order.size(); ++k) {
    cumulative += weights[order[k]];
    if (cumulative >= half) {
      // Exactly half: the median is any point between this value and the next.
      if (std::abs(cumulative - half) <= 1e-14 * total && k + 1 < order.size()) {
        return 0.5 * (values[order[k]] + values[order[k + 1]]);
      }
      return values[order[k]];
    }
  }
  return values[order.back()];
}

double mad(std::span<const double> values, double kappa) {
  std::vector<double> v(values.begin(), values.end());
  const double center = median(v);
  for (double& x : v) x = std::abs(x - center);
  return median(std::move(v)) / kappa;
}

namespace {

double weighted_rho_mean(std::span<const double> r, std::span<const double> w,
                         const RhoFamily& family, double s) {
  double acc = 0.0;
  for (std::size_t i = 0; i < r.size(); ++i) acc += w[i] * rho(family, r[i] / s);
  return acc;
}

}  // namespace

MScaleResult weighted_mscale(std::span<const double> residuals, std::span<const double> weights,
                             const MScaleSpec& spec) {
  if (residuals.empty() || residuals.size() != weights.size()) {
    throw Error(ErrorCode::InvalidArgument, "weighted_mscale needs matching nonempty inputs");
  }
  if (!(spec.b > 0.0)) throw Error(ErrorCode::InvalidArgument, "M-scale b must be positive");
  double total = 0.0;
  for (double w : weights) {
    if (w < 0.0) throw Error(ErrorCode::InvalidArgument, "negative M-scale weight");
    total += w;
  }
  if (std::abs(total - 1.0) > 1e-8) {
    throw Error(ErrorCode::InvalidArgument, "M-scale weights must sum to one");
  }

  // Canonical order makes the result independent of how pairs are listed.
  std::vector<std::size_t> order(residuals.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
    return residuals[i] < residuals[j] || (residuals[i] == residuals[j] && weights[i] < weights[j]);
  });
  std::vector<double> r_sorted(order.size()), w_sorted(order.size());
  for (std::size_t k = 0; k < order.size(); ++k) {
    r_sorted[k] = residuals[order[k]];
    w_sorted[k] = weights[order[k]];
  }
  residuals = r_sorted;
  weights = w_sorted;

  MScaleResult out;
  if (spec.family.kind == RhoKind::Square) {
    double ss = 0.0;
    for (std::size_t i = 0; i < residuals.size(); ++i) ss += weights[i] * residuals[i] * residuals[i];
    out.scale = std::sqrt(ss / spec.b);
    out.degenerate = out.scale == 0.0;
    out.iterations = 1;
    return out;
  }
  if (!spec.family.bounded()) {
    throw Error(ErrorCode::InvalidArgument, "M-scale requires a bounded rho or the square family");
  }
  if (spec.b >= 1.0) throw Error(ErrorCode::InvalidArgument, "M-scale b must be below sup rho");

  double zero_mass = 0.0;
  for (std::size_t i = 0; i < residuals.size(); ++i) {
    if (residuals[i] == 0.0) zero_mass += weights[i];
  }
  if (zero_mass >= 1.0 - spec.b - 1e-12) {
    out.degenerate = true;
    return out;
  }

  std::vector<double> centered(residuals.begin(), residuals.end());
  const double center = weighted_median(residuals, weights);
  for (double& x : centered) x = std::abs(x - center);
  double s = weighted_median(centered, weights) / kMadConsistency;
  if (!(s > 0.0)) {
    double mean_abs = 0.0;
    for (std::size_t i = 0; i < residuals.size(); ++i) mean_abs += weights[i] * std::abs(residuals[i]);
    s = mean_abs / kMadConsistency;
  }

  // g(s) = mean rho(r/s) - b is nonincreasing in s. Plain fixed-point steps
  // first; if they stall, finish with Illinois false position on log s.
  auto g = [&](double scale) { return weighted_rho_mean(residuals, weights, spec.family, scale) - spec.b; };
  const int fixed_point_budget = std::min(spec.max_iterations, 50);
  int it = 0;
  double gs = g(s);
  while (it < fixed_point_budget) {
    const double next = s * std::sqrt((gs + spec.b) / spec.b);
    out.iterations = ++it;
    if (std::abs(next - s) <= spec.tolerance * s) {
      out.scale = next;
      return out;
    }
    s = next;
    gs = g(s);
  }

  double lo = s, hi = s, g_lo = gs, g_hi = gs;
  while (it < spec.max_iterations && (g_lo < 0.0 || g_hi > 0.0)) {
    if (g_lo < 0.0) {
      lo *= 0.5;
      g_lo = g(lo);
    } else {
      hi *= 2.0;
      g_hi = g(hi);
    }
    ++it;
  }
  int side = 0;
  while (it < spec.max_iterations) {
    out.iterations = ++it;
    if (g_lo == 0.0 || g_hi == 0.0 || hi - lo <= spec.tolerance * lo) {
      out.scale = g_lo == 0.0 ? lo : (g_hi == 0.0 ? hi : 0.5 * (lo + hi));
      return out;
    }
    const double x_lo = std::log(lo), x_hi = std::log(hi);
    double x = x_hi - g_hi * (x_hi - x_lo) / (g_hi - g_lo);
    if (!(x > x_lo && x < x_hi)) x = 0.5 * (x_lo + x_hi);
    const double mid = std::exp(x);
    const double g_mid = g(mid);
    if (g_mid > 0.0) {
      lo = mid;
      g_lo = g_mid;
      if (side == -1) g_hi *= 0.5;
      side = -1;
    } else {
      hi = mid;
      g_hi = g_mid;
      if (side == 1) g_lo *= 0.5;
      side = 1;
    }
  }
  throw Error(ErrorCode::NoConvergence,
              "M-scale did not converge in " + std::to_string(spec.max_iterations) + " iterations");
}

MScaleResult mscale(std::span<const double> residuals, const MScaleSpec& spec) {
  std::vector<double> w(residuals.size(), 1.0 / static_cast<double>(residuals.size()));
  return weighted_mscale(residuals, w, spec);
}

}  // namespace rfpca
