#pragma once

// Rho/psi families and the weighted M-scale solver shared by every
// estimation step.

#include <span>
#include <vector>

namespace rfpca {

enum class RhoKind { Huber, Bisquare, Square };

/// Normal consistency constant for the MAD: the 3/4 quantile of N(0, 1).
inline constexpr double kMadConsistency = 0.674489750196082;

/// Default tuning constants.
inline constexpr double kHuberC = 1.345;
inline constexpr double kBisquareScaleC = 1.54764;
inline constexpr double kBisquareSlopeC = 3.44369;

struct RhoFamily {
  RhoKind kind = RhoKind::Square;
  double c = 1.0;  // ignored for Square

  static RhoFamily huber(double c = kHuberC) { return {RhoKind::Huber, c}; }
  static RhoFamily bisquare(double c) { return {RhoKind::Bisquare, c}; }
  static RhoFamily square() { return {RhoKind::Square, 1.0}; }

  bool bounded() const { return kind == RhoKind::Bisquare; }

  friend bool operator==(const RhoFamily&, const RhoFamily&) = default;
};

/// Huber: x^2/2 inside [-c, c], linear outside. Bisquare is normalized to
/// sup rho = 1. Square is x^2.
double rho(const RhoFamily& family, double x);

/// Derivative of rho.
double psi(const RhoFamily& family, double x);

/// psi(x)/x, continuously extended at 0 by psi'(0).
double irls_weight(const RhoFamily& family, double x);

struct MScaleSpec {
  RhoFamily family = RhoFamily::bisquare(kBisquareScaleC);
  double b = 0.5;
  double tolerance = 1e-9;
  int max_iterations = 200;
};

struct MScaleResult {
  double scale = 0.0;
  bool degenerate = false;  // zero-residual mass left no positive root
  int iterations = 0;
};

/// Solves sum_i w_i rho(r_i / s) = b for s >= 0. The weights must be
/// nonnegative and sum to one. Throws NoConvergence when the fixed-point
/// iteration exhausts its budget.
MScaleResult weighted_mscale(std::span<const double> residuals, std::span<const double> weights,
                             const MScaleSpec& spec);

/// Uniform-weight convenience overload.
MScaleResult mscale(std::span<const double> residuals, const MScaleSpec& spec);

/// Median; even lengths average the two central order statistics.
double median(std::vector<double> values);

/// Lower weighted median: smallest v with cumulative weight >= half the
/// total. Ties in cumulative weight at exactly one half take the midpoint.
double weighted_median(std::span<const double> values, std::span<const double> weights);

/// kappa^-1 * median |v - median(v)|.
double mad(std::span<const double> values, double kappa = kMadConsistency);

}  // namespace rfpca
