#pragma once

// Mean, covariance surface, eigen-analysis and score prediction for
// sparsely observed curves, in robust (ROB) and least-squares (LS) variants.

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rfpca/robust_kernels.hpp"
#include "rfpca/smoothers.hpp"

namespace rfpca {

/// M equidistant points on [a, b], both endpoints included.
struct GridSpec {
  double a = 0.0;
  double b = 1.0;
  int size = 50;

  double step() const { return (b - a) / static_cast<double>(size - 1); }
  double point(int m) const { return m == size - 1 ? b : a + step() * m; }
  std::vector<double> points() const;
  void validate() const;

  friend bool operator==(const GridSpec&, const GridSpec&) = default;
};

/// Linear interpolation of gridded values, clamped to [a, b].
double interpolate(const GridSpec& grid, std::span<const double> values, double t);

/// Bilinear interpolation of a gridded surface, clamped to [a, b]^2.
double interpolate(const GridSpec& grid, const Eigen::MatrixXd& surface, double s, double t);

struct Curve {
  std::string id;
  std::vector<double> times;
  std::vector<double> values;
};

struct SparseFunctionalSample {
  std::vector<Curve> curves;
  double a = 0.0;  // domain
  double b = 1.0;

  std::size_t size() const { return curves.size(); }
  std::size_t num_observations() const;
  std::vector<Observation> pooled() const;
  /// Throws InvalidArgument on empty curves, unsorted or out-of-domain
  /// times, mismatched lengths, or non-finite values.
  void validate() const;
  SparseFunctionalSample subset(std::span<const std::size_t> indices) const;

  friend bool operator==(const SparseFunctionalSample&, const SparseFunctionalSample&);
};

enum class Variant { Robust, LeastSquares };

std::string to_string(Variant v);
Variant parse_variant(const std::string& text);

struct FitConfig {
  Variant variant = Variant::Robust;
  std::optional<double> h_mean;  // nullopt = cross-validate
  std::optional<double> h_cov;
  RhoFamily rho_mean = RhoFamily::huber(kHuberC);
  RhoFamily rho_scale = RhoFamily::bisquare(kBisquareScaleC);
  double scale_b = 0.5;
  RhoFamily rho_slope = RhoFamily::bisquare(kBisquareSlopeC);
  int grid_size = 50;
  std::optional<std::pair<double, double>> domain;  // defaults to the sample's
  std::optional<double> delta;                      // nullopt = 1% of mean diagonal
  double tau = 0.90;
  std::uint64_t seed = 1;
  double smooth_steps = 2.0;
  int cv_folds = 5;
  std::vector<double> cv_candidates;  // empty = default log grid
  WindowOptions window;

  // Families after applying the variant: LS replaces every rho by u^2.
  RhoFamily mean_family() const;
  RhoFamily slope_family() const;
  MScaleSpec scale_spec() const;
  GridSpec grid_for(const SparseFunctionalSample& sample) const;
};

struct MeanFunctionEstimate {
  GridSpec grid;
  std::vector<double> values;
  int widened_points = 0;
  int singular_points = 0;

  double operator()(double t) const { return interpolate(grid, values, t); }
};

struct DiagonalEstimate {
  std::vector<double> values;  // variance units
  std::vector<bool> degenerate;
};

struct CovarianceSurface {
  GridSpec grid;
  Eigen::MatrixXd values;
  bool psd_projected = false;
  int failed_cells = 0;

  double operator()(double s, double t) const { return interpolate(grid, values, s, t); }
};

struct EigenSystem {
  GridSpec grid;
  std::vector<double> eigenvalues;  // operator scale, descending
  Eigen::MatrixXd eigenfunctions;   // column k tabulated on the grid
  int num_components = 0;
  double total_variance = 0.0;

  double eigenfunction(int k, double t) const;
};

struct ScoreMatrix {
  Eigen::MatrixXd scores;  // curves x components
  double delta = 0.0;
};

struct FpcaFit {
  Variant variant = Variant::Robust;
  double h_mean = 0.0;
  double h_cov = 0.0;
  MeanFunctionEstimate mean;
  DiagonalEstimate diagonal;
  CovarianceSurface surface;
  EigenSystem eigen;
  ScoreMatrix scores;
};

MeanFunctionEstimate estimate_mean(const SparseFunctionalSample& sample, const FitConfig& config,
                                   double h);

DiagonalEstimate estimate_diagonal(const SparseFunctionalSample& sample,
                                   const MeanFunctionEstimate& mean, const FitConfig& config,
                                   double h);

/// Ordered within-curve pairs (j != l) of centered observations.
std::vector<ObservationPair> centered_pairs(const SparseFunctionalSample& sample,
                                            const MeanFunctionEstimate& mean);

/// Raw slope surface beta(g_m, g_l) off the diagonal; failed and diagonal
/// cells are NaN.
Eigen::MatrixXd slope_surface(std::span<const ObservationPair> pairs, const GridSpec& grid,
                              const FitConfig& config, double h, int* failed_cells = nullptr);

CovarianceSurface assemble_covariance(const SparseFunctionalSample& sample,
                                      const MeanFunctionEstimate& mean,
                                      const DiagonalEstimate& diagonal, const FitConfig& config,
                                      double h);

/// Eigenvalue truncation at zero; idempotent.
CovarianceSurface psd_project(const CovarianceSurface& surface);

struct SymmetricEigen {
  Eigen::VectorXd values;   // descending
  Eigen::MatrixXd vectors;  // orthonormal columns
};

/// Cyclic Jacobi rotations; stops when the off-diagonal Frobenius norm
/// falls below `tolerance` times the matrix Frobenius norm.
SymmetricEigen jacobi_eigen(const Eigen::MatrixXd& symmetric, double tolerance = 1e-12,
                            int max_sweeps = 100);

EigenSystem eigendecompose(const CovarianceSurface& surface);

int select_num_components(std::span<const double> eigenvalues, double tau);

/// Default ridge: 1% of the mean surface diagonal.
double default_ridge(const CovarianceSurface& surface);

ScoreMatrix predict_scores(const SparseFunctionalSample& sample, const MeanFunctionEstimate& mean,
                           const CovarianceSurface& surface, const EigenSystem& eigen,
                           double delta, int num_components);

/// mu + sum_k xi_k phi_k on the grid; one row per curve.
Eigen::MatrixXd reconstruct(const ScoreMatrix& scores, const EigenSystem& eigen,
                            const MeanFunctionEstimate& mean, int num_components);

/// Full pipeline; bandwidths left unset are chosen by cross-validation.
FpcaFit fit(const SparseFunctionalSample& sample, const FitConfig& config);

}  // namespace rfpca
