#include "rfpca/fpca.hpp"

#include <Eigen/Jacobi>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "rfpca/errors.hpp"
#include "rfpca/model_selection.hpp"

namespace rfpca {

std::vector<double> GridSpec::points() const {
  std::vector<double> p(static_cast<std::size_t>(size));
  for (int m = 0; m < size; ++m) p[m] = point(m);
  return p;
}

void GridSpec::validate() const {
  if (size < 2) throw Error(ErrorCode::InvalidArgument, "grid needs at least two points");
  if (!(b > a)) throw Error(ErrorCode::InvalidArgument, "grid domain must satisfy a < b");
}

namespace {

// Cell index and fractional offset of t, clamped to the grid.
std::pair<int, double> locate(const GridSpec& grid, double t) {
  const double u = (std::clamp(t, grid.a, grid.b) - grid.a) / grid.step();
  int m = static_cast<int>(std::floor(u));
  m = std::clamp(m, 0, grid.size - 2);
  return {m, std::clamp(u - m, 0.0, 1.0)};
}

}  // namespace

double interpolate(const GridSpec& grid, std::span<const double> values, double t) {
  const auto [m, f] = locate(grid, t);
  if (f == 0.0) return values[m];
  if (f == 1.0) return values[m + 1];
  return (1.0 - f) * values[m] + f * values[m + 1];
}

double interpolate(const GridSpec& grid, const Eigen::MatrixXd& surface, double s, double t) {
  const auto [i, fs] = locate(grid, s);
  const auto [j, ft] = locate(grid, t);
  return (1.0 - fs) * ((1.0 - ft) * surface(i, j) + ft * surface(i, j + 1)) +
         fs * ((1.0 - ft) * surface(i + 1, j) + ft * surface(i + 1, j + 1));
}

std::size_t SparseFunctionalSample::num_observations() const {
  std::size_t n = 0;
  for (const auto& c : curves) n += c.times.size();
  return n;
}

std::vector<Observation> SparseFunctionalSample::pooled() const {
  std::vector<Observation> out;
  out.reserve(num_observations());
  for (const auto& c : curves) {
    for (std::size_t j = 0; j < c.times.size(); ++j) out.push_back({c.times[j], c.values[j]});
  }
  return out;
}

void SparseFunctionalSample::validate() const {
  if (curves.empty()) throw Error(ErrorCode::InvalidArgument, "sample has no curves");
  if (!(b > a)) throw Error(ErrorCode::InvalidArgument, "sample domain must satisfy a < b");
  for (const auto& c : curves) {
    if (c.times.empty()) throw Error(ErrorCode::InvalidArgument, "curve '" + c.id + "' is empty");
    if (c.times.size() != c.values.size()) {
      throw Error(ErrorCode::InvalidArgument, "curve '" + c.id + "' has mismatched lengths");
    }
    for (std::size_t j = 0; j < c.times.size(); ++j) {
      if (!std::isfinite(c.times[j]) || !std::isfinite(c.values[j])) {
        throw Error(ErrorCode::InvalidArgument, "curve '" + c.id + "' has non-finite entries");
      }
      if (c.times[j] < a || c.times[j] > b) {
        throw Error(ErrorCode::InvalidArgument, "curve '" + c.id + "' has times outside the domain");
      }
      if (j > 0 && !(c.times[j] > c.times[j - 1])) {
        throw Error(ErrorCode::InvalidArgument, "curve '" + c.id + "' times are not strictly increasing");
      }
    }
  }
}

SparseFunctionalSample SparseFunctionalSample::subset(std::span<const std::size_t> indices) const {
  SparseFunctionalSample out;
  out.a = a;
  out.b = b;
  out.curves.reserve(indices.size());
  for (std::size_t i : indices) out.curves.push_back(curves.at(i));
  return out;
}

bool operator==(const SparseFunctionalSample& x, const SparseFunctionalSample& y) {
  if (x.a != y.a || x.b != y.b || x.curves.size() != y.curves.size()) return false;
  for (std::size_t i = 0; i < x.curves.size(); ++i) {
    const auto& c = x.curves[i];
    const auto& d = y.curves[i];
    if (c.id != d.id || c.times != d.times || c.values != d.values) return false;
  }
  return true;
}

std::string to_string(Variant v) { return v == Variant::Robust ? "rob" : "ls"; }

Variant parse_variant(const std::string& text) {
  if (text == "rob" || text == "ROB") return Variant::Robust;
  if (text == "ls" || text == "LS") return Variant::LeastSquares;
  throw Error(ErrorCode::InvalidArgument, "unknown variant '" + text + "' (expected rob or ls)");
}

RhoFamily FitConfig::mean_family() const {
  return variant == Variant::LeastSquares ? RhoFamily::square() : rho_mean;
}

RhoFamily FitConfig::slope_family() const {
  return variant == Variant::LeastSquares ? RhoFamily::square() : rho_slope;
}

MScaleSpec FitConfig::scale_spec() const {
  MScaleSpec spec;
  if (variant == Variant::LeastSquares) {
    spec.family = RhoFamily::square();
    spec.b = 1.0;
  } else {
    spec.family = rho_scale;
    spec.b = scale_b;
  }
  return spec;
}

GridSpec FitConfig::grid_for(const SparseFunctionalSample& sample) const {
  GridSpec grid;
  grid.size = grid_size;
  if (domain) {
    grid.a = domain->first;
    grid.b = domain->second;
  } else {
    grid.a = sample.a;
    grid.b = sample.b;
  }
  grid.validate();
  return grid;
}

double EigenSystem::eigenfunction(int k, double t) const {
  const auto col = eigenfunctions.col(k);
  return interpolate(grid, std::span<const double>(col.data(), static_cast<std::size_t>(col.size())), t);
}

MeanFunctionEstimate estimate_mean(const SparseFunctionalSample& sample, const FitConfig& config,
                                   double h) {
  const auto data = sample.pooled();
  if (data.empty()) throw Error(ErrorCode::InvalidArgument, "no observations to smooth");
  const GridSpec grid = config.grid_for(sample);
  const RhoFamily family = config.mean_family();

  MeanFunctionEstimate mean;
  mean.grid = grid;
  mean.values.resize(static_cast<std::size_t>(grid.size));
  for (int m = 0; m < grid.size; ++m) {
    const double t0 = grid.point(m);
    const double h_eff = resolve_bandwidth(data, t0, h, config.window);
    if (h_eff > h) ++mean.widened_points;

    double sigma = 1.0;
    if (family.kind != RhoKind::Square) {
      const LocalScale local = local_mad_scale(data, t0, h_eff);
      sigma = local.scale;
      if (local.degenerate) {
        // Fall back to the mean absolute deviation about the local median.
        std::vector<double> v;
        for (const auto& o : data) {
          if (std::abs(o.t - t0) <= h_eff) v.push_back(o.x);
        }
        const double center = median(v);
        double mean_abs = 0.0;
        for (double x : v) mean_abs += std::abs(x - center);
        sigma = mean_abs / static_cast<double>(v.size()) / kMadConsistency;
        if (sigma == 0.0) {
          mean.values[m] = center;
          continue;
        }
      }
    }
    const LocalMeanFit local = local_linear_m_mean(data, t0, h_eff, family, sigma, config.window);
    if (local.diagnostics.singular_design) ++mean.singular_points;
    mean.values[m] = local.intercept;
  }
  return mean;
}

DiagonalEstimate estimate_diagonal(const SparseFunctionalSample& sample,
                                   const MeanFunctionEstimate& mean, const FitConfig& config,
                                   double h) {
  const auto data = sample.pooled();
  std::vector<double> residuals(data.size());
  for (std::size_t i = 0; i < data.size(); ++i) residuals[i] = data[i].x - mean(data[i].t);
  const MScaleSpec spec = config.scale_spec();
  const GridSpec& grid = mean.grid;

  DiagonalEstimate diag;
  diag.values.resize(static_cast<std::size_t>(grid.size));
  diag.degenerate.assign(static_cast<std::size_t>(grid.size), false);
  std::vector<double> r, w;
  for (int m = 0; m < grid.size; ++m) {
    const double t0 = grid.point(m);
    const double h_eff = resolve_bandwidth(data, t0, h, config.window);
    r.clear();
    w.clear();
    double total = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double k = epanechnikov((data[i].t - t0) / h_eff);
      if (k > 0.0) {
        r.push_back(residuals[i]);
        w.push_back(k);
        total += k;
      }
    }
    for (double& x : w) x /= total;
    const MScaleResult s = weighted_mscale(r, w, spec);
    diag.values[m] = s.scale * s.scale;
    diag.degenerate[m] = s.degenerate;
  }
  return diag;
}

std::vector<ObservationPair> centered_pairs(const SparseFunctionalSample& sample,
                                            const MeanFunctionEstimate& mean) {
  std::vector<ObservationPair> pairs;
  std::vector<double> centered;
  for (const auto& c : sample.curves) {
    centered.resize(c.times.size());
    for (std::size_t j = 0; j < c.times.size(); ++j) centered[j] = c.values[j] - mean(c.times[j]);
    for (std::size_t j = 0; j < c.times.size(); ++j) {
      for (std::size_t l = 0; l < c.times.size(); ++l) {
        if (j == l) continue;
        pairs.push_back({centered[l], centered[j], c.times[l], c.times[j]});
      }
    }
  }
  return pairs;
}

Eigen::MatrixXd slope_surface(std::span<const ObservationPair> pairs, const GridSpec& grid,
                              const FitConfig& config, double h, int* failed_cells) {
  const int M = grid.size;
  const RhoFamily family = config.slope_family();
  Eigen::MatrixXd beta = Eigen::MatrixXd::Constant(M, M, std::numeric_limits<double>::quiet_NaN());
  int failed = 0;
  for (int m = 0; m < M; ++m) {
    for (int l = 0; l < M; ++l) {
      if (m == l) continue;
      try {
        beta(m, l) = local_m_slope(pairs, grid.point(m), grid.point(l), h, family, config.window).slope;
      } catch (const Error& e) {
        if (e.code() != ErrorCode::NoLocalData && e.code() != ErrorCode::NoConvergence) throw;
        ++failed;
      }
    }
  }
  if (failed_cells) *failed_cells = failed;
  return beta;
}

CovarianceSurface assemble_covariance(const SparseFunctionalSample& sample,
                                      const MeanFunctionEstimate& mean,
                                      const DiagonalEstimate& diagonal, const FitConfig& config,
                                      double h) {
  const GridSpec& grid = mean.grid;
  const int M = grid.size;
  const auto pairs = centered_pairs(sample, mean);

  CovarianceSurface out;
  out.grid = grid;
  Eigen::MatrixXd raw = slope_surface(pairs, grid, config, h, &out.failed_cells);
  const int off_diagonal = M * (M - 1);
  if (2 * out.failed_cells > off_diagonal) {
    throw Error(ErrorCode::InsufficientPairings,
                std::to_string(out.failed_cells) + " of " + std::to_string(off_diagonal) +
                    " covariance cells have no local pairs");
  }
  // gamma~(t0, s0) = beta(t0, s0) * gamma(s0, s0)
  for (int l = 0; l < M; ++l) raw.col(l) *= diagonal.values[l];

  const Eigen::MatrixXd smoothed = bivariate_smooth(raw, config.smooth_steps);
  const std::vector<double> diag_smooth = smooth_curve(diagonal.values, config.smooth_steps);
  out.values.resize(M, M);
  for (int m = 0; m < M; ++m) {
    out.values(m, m) = std::max(diag_smooth[m], 0.0);
    for (int l = m + 1; l < M; ++l) {
      const double v = 0.5 * (smoothed(m, l) + smoothed(l, m));
      out.values(m, l) = v;
      out.values(l, m) = v;
    }
  }
  return out;
}

SymmetricEigen jacobi_eigen(const Eigen::MatrixXd& symmetric, double tolerance, int max_sweeps) {
  const Eigen::Index n = symmetric.rows();
  if (symmetric.cols() != n) throw Error(ErrorCode::InvalidArgument, "matrix must be square");
  Eigen::MatrixXd a = symmetric;
  Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n);
  const double norm = a.norm();
  auto off_norm = [&] {
    double acc = 0.0;
    for (Eigen::Index p = 0; p < n; ++p)
      for (Eigen::Index q = p + 1; q < n; ++q) acc += 2.0 * a(p, q) * a(p, q);
    return std::sqrt(acc);
  };
  for (int sweep = 0; sweep < max_sweeps && norm > 0.0; ++sweep) {
    if (off_norm() <= tolerance * norm) break;
    for (Eigen::Index p = 0; p < n - 1; ++p) {
      for (Eigen::Index q = p + 1; q < n; ++q) {
        if (a(p, q) == 0.0) continue;
        Eigen::JacobiRotation<double> rot;
        rot.makeJacobi(a, p, q);
        a.applyOnTheLeft(p, q, rot.adjoint());
        a.applyOnTheRight(p, q, rot);
        v.applyOnTheRight(p, q, rot);
        a(p, q) = 0.0;
        a(q, p) = 0.0;
      }
    }
  }
  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index i, Eigen::Index j) { return a(i, i) > a(j, j); });
  SymmetricEigen out;
  out.values.resize(n);
  out.vectors.resize(n, n);
  for (Eigen::Index k = 0; k < n; ++k) {
    out.values(k) = a(order[k], order[k]);
    out.vectors.col(k) = v.col(order[k]);
  }
  return out;
}

CovarianceSurface psd_project(const CovarianceSurface& surface) {
  const SymmetricEigen eig = jacobi_eigen(surface.values);
  const Eigen::VectorXd kept = eig.values.cwiseMax(0.0);
  Eigen::MatrixXd rebuilt = eig.vectors * kept.asDiagonal() * eig.vectors.transpose();
  CovarianceSurface out = surface;
  const Eigen::Index n = rebuilt.rows();
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double s = 0.5 * (rebuilt(i, j) + rebuilt(j, i));
      rebuilt(i, j) = s;
      rebuilt(j, i) = s;
    }
  }
  out.values = std::move(rebuilt);
  out.psd_projected = true;
  return out;
}

EigenSystem eigendecompose(const CovarianceSurface& surface) {
  const SymmetricEigen eig = jacobi_eigen(surface.values);
  const double dt = surface.grid.step();
  EigenSystem out;
  out.grid = surface.grid;
  out.eigenvalues.resize(static_cast<std::size_t>(eig.values.size()));
  out.eigenfunctions = eig.vectors / std::sqrt(dt);
  for (Eigen::Index k = 0; k < eig.values.size(); ++k) {
    out.eigenvalues[k] = eig.values(k) * dt;
    if (out.eigenfunctions.col(k).sum() < 0.0) out.eigenfunctions.col(k) *= -1.0;
    out.total_variance += std::max(out.eigenvalues[k], 0.0);
  }
  return out;
}

int select_num_components(std::span<const double> eigenvalues, double tau) {
  if (!(tau > 0.0 && tau <= 1.0)) throw Error(ErrorCode::InvalidArgument, "tau must lie in (0, 1]");
  double total = 0.0;
  for (double l : eigenvalues) total += std::max(l, 0.0);
  if (!(total > 0.0)) throw Error(ErrorCode::NoPositiveSpectrum, "no positive eigenvalue");
  double cumulative = 0.0;
  for (std::size_t k = 0; k < eigenvalues.size(); ++k) {
    cumulative += std::max(eigenvalues[k], 0.0);
    if (cumulative >= tau * total * (1.0 - 1e-12)) return static_cast<int>(k + 1);
  }
  return static_cast<int>(eigenvalues.size());
}

double default_ridge(const CovarianceSurface& surface) {
  return 0.01 * surface.values.diagonal().mean();
}

ScoreMatrix predict_scores(const SparseFunctionalSample& sample, const MeanFunctionEstimate& mean,
                           const CovarianceSurface& surface, const EigenSystem& eigen,
                           double delta, int num_components) {
  if (delta < 0.0) throw Error(ErrorCode::InvalidArgument, "ridge must be nonnegative");
  if (num_components < 0 || num_components > static_cast<int>(eigen.eigenvalues.size())) {
    throw Error(ErrorCode::InvalidArgument, "component count out of range");
  }
  ScoreMatrix out;
  out.delta = delta;
  out.scores = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(sample.size()), num_components);
  for (std::size_t i = 0; i < sample.size(); ++i) {
    const auto& c = sample.curves[i];
    const auto n = static_cast<Eigen::Index>(c.times.size());
    if (n == 0) throw Error(ErrorCode::InvalidArgument, "curve '" + c.id + "' is empty");
    Eigen::MatrixXd sigma(n, n);
    Eigen::VectorXd centered(n);
    for (Eigen::Index j = 0; j < n; ++j) {
      centered(j) = c.values[j] - mean(c.times[j]);
      for (Eigen::Index l = 0; l < n; ++l) sigma(j, l) = surface(c.times[j], c.times[l]);
    }
    sigma.diagonal().array() += delta;
    Eigen::FullPivLU<Eigen::MatrixXd> lu(sigma);
    if (!lu.isInvertible()) {
      throw Error(ErrorCode::SingularSystem, "score system for curve '" + c.id + "' is singular");
    }
    const Eigen::VectorXd solved = lu.solve(centered);
    for (int k = 0; k < num_components; ++k) {
      double acc = 0.0;
      for (Eigen::Index j = 0; j < n; ++j) acc += eigen.eigenfunction(k, c.times[j]) * solved(j);
      out.scores(static_cast<Eigen::Index>(i), k) = eigen.eigenvalues[k] * acc;
    }
  }
  return out;
}

Eigen::MatrixXd reconstruct(const ScoreMatrix& scores, const EigenSystem& eigen,
                            const MeanFunctionEstimate& mean, int num_components) {
  const Eigen::Index N = scores.scores.rows();
  const int M = mean.grid.size;
  if (num_components > scores.scores.cols()) {
    throw Error(ErrorCode::InvalidArgument, "more components requested than scores available");
  }
  Eigen::MatrixXd out(N, M);
  const Eigen::Map<const Eigen::RowVectorXd> mu(mean.values.data(), M);
  for (Eigen::Index i = 0; i < N; ++i) {
    out.row(i) = mu;
    for (int k = 0; k < num_components; ++k) {
      out.row(i) += scores.scores(i, k) * eigen.eigenfunctions.col(k).transpose();
    }
  }
  return out;
}

FpcaFit fit(const SparseFunctionalSample& sample, const FitConfig& config) {
  sample.validate();
  FpcaFit out;
  out.variant = config.variant;
  const GridSpec grid = config.grid_for(sample);

  std::optional<CvPlan> plan;
  if (!config.h_mean || !config.h_cov) {
    plan = make_cv_plan(sample.size(), grid, config.cv_folds, config.seed, config.cv_candidates);
  }
  out.h_mean = config.h_mean ? *config.h_mean : cv_bandwidth_mean(sample, *plan, config).bandwidth;
  out.mean = estimate_mean(sample, config, out.h_mean);
  out.h_cov = config.h_cov ? *config.h_cov : cv_bandwidth_cov(sample, out.mean, *plan, config).bandwidth;
  out.diagonal = estimate_diagonal(sample, out.mean, config, out.h_cov);
  out.surface = psd_project(assemble_covariance(sample, out.mean, out.diagonal, config, out.h_cov));
  out.eigen = eigendecompose(out.surface);
  out.eigen.num_components = select_num_components(out.eigen.eigenvalues, config.tau);
  const double delta = config.delta ? *config.delta : default_ridge(out.surface);
  out.scores = predict_scores(sample, out.mean, out.surface, out.eigen, delta, out.eigen.num_components);
  return out;
}

}  // namespace rfpca
