#pragma once

// Simulation models, contamination, evaluation metrics and the Monte Carlo
// driver comparing the ROB and LS fits.

#include <Eigen/Dense>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rfpca/fpca.hpp"

namespace rfpca {

/// Matern covariance sigma^2 2^(1-nu)/Gamma(nu) u^nu K_nu(u) with
/// u = sqrt(2 nu)|s - t| / range; equals sigma^2 at s = t.
double matern_cov(double s, double t, double nu, double range, double sigma);

inline constexpr int kReferenceGridSize = 501;

/// Eigenpairs of a kernel on [a, b] from trapezoid quadrature on n points.
/// Eigenfunctions (columns) have unit quadrature norm and nonnegative sum.
struct QuadratureEigen {
  std::vector<double> nodes;
  Eigen::VectorXd values;  // descending, operator scale
  Eigen::MatrixXd functions;
};

template <class Kernel>
QuadratureEigen quadrature_eigen(Kernel&& kernel, double a, double b, int n, int keep);

struct ModelTruth {
  int model = 1;
  double a = 0.0;
  double b = 1.0;
  std::vector<double> eigenvalues;
  GridSpec reference_grid;
  Eigen::MatrixXd reference_functions;  // reference_grid.size x q
  std::vector<double> operator_eigenvalues;  // raw kernel spectrum (Model 2)

  int q() const { return static_cast<int>(eigenvalues.size()); }
  double mean(double t) const;
  double eigenfunction(int k, double t) const;
  double gamma(double s, double t) const;
  /// True scatter function tabulated on `grid`.
  Eigen::MatrixXd surface(const GridSpec& grid) const;
};

ModelTruth model1_truth();
/// Computed once and cached.
const ModelTruth& model2_truth();

struct SimulatedSample {
  SparseFunctionalSample sample;
  ModelTruth truth;
  Eigen::MatrixXd z;       // standardized scores, N x q
  Eigen::MatrixXd scores;  // sqrt(lambda_k) z_ik
  std::vector<bool> contaminated;
};

SimulatedSample generate_model1(int num_curves, std::uint64_t seed);
SimulatedSample generate_model2(int num_curves, std::uint64_t seed);
SimulatedSample generate(int model, int num_curves, std::uint64_t seed);

/// Per-curve Bernoulli(eps) contamination: flagged curves get their second
/// (Model 1) or second and third (Model 2) standardized scores redrawn from
/// the contaminating law and their values recomputed at the same times.
SimulatedSample contaminate(const SimulatedSample& clean, double eps, std::uint64_t seed);

/// Raw sum of squared cell differences.
double frobenius_discrepancy(const Eigen::MatrixXd& estimate, const Eigen::MatrixXd& truth);

/// |dt * sum_m f(g_m) g(g_m)|.
double alignment(std::span<const double> estimate, std::span<const double> truth, double dt);

/// Pearson correlation of mid-ranks. Throws DegenerateRanks for constant input.
double spearman_rho(std::span<const double> x, std::span<const double> y);

struct ScoreMetrics {
  std::vector<double> mse;
  std::vector<double> m2;
  std::vector<bool> flipped;
};

/// Orients each estimated score column by the sign of its Spearman
/// correlation with the truth, then averages squared errors over all curves
/// (MSE) and over unflagged curves (M2).
ScoreMetrics score_metrics(const Eigen::MatrixXd& estimated, const Eigen::MatrixXd& truth,
                           const std::vector<bool>& contaminated);

struct MonteCarloConfig {
  int model = 1;
  double eps = 0.0;
  Variant variant = Variant::Robust;
  int replications = 100;
  int num_curves = 100;
  std::uint64_t seed = 1;
  int jobs = 1;
  bool reselect_bandwidths = false;
  int metric_components = 2;
  FitConfig fit;  // variant, bandwidths and domain are overridden per run
};

struct ReplicationMetrics {
  int replication = 0;
  bool ok = false;
  std::string error;
  double h_mean = 0.0;
  double h_cov = 0.0;
  int contaminated = 0;
  int selected_components = 0;
  double frob_sq_raw = 0.0;
  double frob_sq = 0.0;  // raw sum / M^2
  std::vector<double> log_loss;
  std::vector<double> rel_loss;
  std::vector<double> alignment;
  std::vector<double> mse;
  std::vector<double> m2;
};

struct MetricSummary {
  double mean = 0.0;
  double median = 0.0;
  int count = 0;
};

struct SimulationReport {
  MonteCarloConfig config;
  double h_mean = 0.0;
  double h_cov = 0.0;
  std::vector<ReplicationMetrics> rows;

  int failures() const;
  /// Scalar metric names: frob_sq, frob_sq_raw, selected_components.
  /// Per-component: log_loss, rel_loss, alignment, mse, m2 (k is 0-based).
  std::vector<double> values(const std::string& metric, int k = 0) const;
  MetricSummary summary(const std::string& metric, int k = 0) const;
};

ReplicationMetrics evaluate_fit(const FpcaFit& fit, const SimulatedSample& sim, int metric_components);

SimulationReport run_monte_carlo(const MonteCarloConfig& config);

template <class Kernel>
QuadratureEigen quadrature_eigen(Kernel&& kernel, double a, double b, int n, int keep) {
  QuadratureEigen out;
  const double h = (b - a) / (n - 1);
  out.nodes.resize(static_cast<std::size_t>(n));
  Eigen::VectorXd sqrt_w(n);
  for (int i = 0; i < n; ++i) {
    out.nodes[i] = i == n - 1 ? b : a + h * i;
    sqrt_w(i) = std::sqrt((i == 0 || i == n - 1) ? 0.5 * h : h);
  }
  Eigen::MatrixXd sym(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = i; j < n; ++j) {
      const double v = sqrt_w(i) * kernel(out.nodes[i], out.nodes[j]) * sqrt_w(j);
      sym(i, j) = v;
      sym(j, i) = v;
    }
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(sym);
  out.values.resize(keep);
  out.functions.resize(n, keep);
  for (int k = 0; k < keep; ++k) {
    const Eigen::Index src = n - 1 - k;  // solver sorts ascending
    out.values(k) = solver.eigenvalues()(src);
    Eigen::VectorXd f = solver.eigenvectors().col(src).cwiseQuotient(sqrt_w);
    if (f.sum() < 0.0) f = -f;
    out.functions.col(k) = f;
  }
  return out;
}

}  // namespace rfpca
