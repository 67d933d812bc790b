#include "rfpca/simulation.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <thread>

#include "rfpca/errors.hpp"
#include "rfpca/model_selection.hpp"
#include "rfpca/rng.hpp"

namespace rfpca {

double matern_cov(double s, double t, double nu, double range, double sigma) {
  if (!(nu > 0.0 && range > 0.0 && sigma > 0.0)) {
    throw Error(ErrorCode::InvalidArgument, "Matern parameters must be positive");
  }
  const double u = std::sqrt(2.0 * nu) * std::abs(s - t) / range;
  if (u == 0.0) return sigma * sigma;
  return sigma * sigma * std::pow(2.0, 1.0 - nu) / std::tgamma(nu) * std::pow(u, nu) *
         std::cyl_bessel_k(nu, u);
}

double ModelTruth::mean(double t) const {
  if (model == 1) return t + std::sin(t);
  return 10.0 * std::sin(2.0 * std::numbers::pi * t) * std::exp(-3.0 * t);
}

double ModelTruth::eigenfunction(int k, double t) const {
  if (model == 1) {
    const double arg = t * std::numbers::pi / 10.0;
    return k == 0 ? -std::cos(arg) / std::sqrt(5.0) : std::sin(arg) / std::sqrt(5.0);
  }
  const auto col = reference_functions.col(k);
  return interpolate(reference_grid, std::span<const double>(col.data(), static_cast<std::size_t>(col.size())), t);
}

double ModelTruth::gamma(double s, double t) const {
  double acc = 0.0;
  for (int k = 0; k < q(); ++k) acc += eigenvalues[k] * eigenfunction(k, s) * eigenfunction(k, t);
  return acc;
}

Eigen::MatrixXd ModelTruth::surface(const GridSpec& grid) const {
  Eigen::MatrixXd phi(grid.size, q());
  for (int m = 0; m < grid.size; ++m)
    for (int k = 0; k < q(); ++k) phi(m, k) = eigenfunction(k, grid.point(m));
  const Eigen::Map<const Eigen::VectorXd> lambda(eigenvalues.data(), q());
  return phi * lambda.asDiagonal() * phi.transpose();
}

ModelTruth model1_truth() {
  ModelTruth truth;
  truth.model = 1;
  truth.a = 0.0;
  truth.b = 10.0;
  truth.eigenvalues = {4.0, 1.0};
  truth.reference_grid = {0.0, 10.0, kReferenceGridSize};
  truth.reference_functions.resize(kReferenceGridSize, 2);
  for (int i = 0; i < kReferenceGridSize; ++i)
    for (int k = 0; k < 2; ++k) truth.reference_functions(i, k) = truth.eigenfunction(k, truth.reference_grid.point(i));
  return truth;
}

namespace {

ModelTruth build_model2_truth() {
  ModelTruth truth;
  truth.model = 2;
  truth.a = 0.0;
  truth.b = 1.0;
  truth.eigenvalues = {0.83, 0.08, 0.029, 0.015};
  truth.reference_grid = {0.0, 1.0, kReferenceGridSize};
  const auto eig = quadrature_eigen(
      [](double s, double t) { return matern_cov(s, t, 1.0 / 3.0, 3.0, 1.0); }, 0.0, 1.0,
      kReferenceGridSize, 6);
  truth.reference_functions = eig.functions.leftCols(4);
  truth.operator_eigenvalues.assign(eig.values.data(), eig.values.data() + eig.values.size());
  return truth;
}

int draw_uniform_int(Rng& rng, int lo, int hi) { return std::uniform_int_distribution<int>(lo, hi)(rng); }

void fill_values(SimulatedSample& sim, std::size_t i) {
  auto& c = sim.sample.curves[i];
  const auto& truth = sim.truth;
  for (std::size_t j = 0; j < c.times.size(); ++j) {
    double v = truth.mean(c.times[j]);
    for (int k = 0; k < truth.q(); ++k) v += sim.scores(static_cast<Eigen::Index>(i), k) * truth.eigenfunction(k, c.times[j]);
    c.values[j] = v;
  }
}

void draw_scores(SimulatedSample& sim, std::size_t i, Rng& rng) {
  std::normal_distribution<double> normal(0.0, 1.0);
  for (int k = 0; k < sim.truth.q(); ++k) {
    const double z = normal(rng);
    sim.z(static_cast<Eigen::Index>(i), k) = z;
    sim.scores(static_cast<Eigen::Index>(i), k) = std::sqrt(sim.truth.eigenvalues[k]) * z;
  }
}

SimulatedSample start(ModelTruth truth, int num_curves) {
  if (num_curves < 1) throw Error(ErrorCode::InvalidArgument, "need at least one curve");
  SimulatedSample sim;
  sim.truth = std::move(truth);
  sim.sample.a = sim.truth.a;
  sim.sample.b = sim.truth.b;
  sim.sample.curves.resize(static_cast<std::size_t>(num_curves));
  sim.z.resize(num_curves, sim.truth.q());
  sim.scores.resize(num_curves, sim.truth.q());
  sim.contaminated.assign(static_cast<std::size_t>(num_curves), false);
  return sim;
}

}  // namespace

const ModelTruth& model2_truth() {
  static const ModelTruth truth = build_model2_truth();
  return truth;
}

SimulatedSample generate_model1(int num_curves, std::uint64_t seed) {
  SimulatedSample sim = start(model1_truth(), num_curves);
  Rng rng(seed);
  // Jittered design sites, drawn once per sample; N(0, 0.1) read as variance 0.1.
  std::normal_distribution<double> jitter(0.0, std::sqrt(0.1));
  std::vector<double> sites(51);
  for (int l = 0; l < 51; ++l) sites[l] = std::clamp(0.2 * l + jitter(rng), 0.0, 10.0);

  std::vector<int> interior(49);
  std::iota(interior.begin(), interior.end(), 1);
  for (int i = 0; i < num_curves; ++i) {
    auto& c = sim.sample.curves[i];
    c.id = std::to_string(i + 1);
    const int n = draw_uniform_int(rng, 2, 4);
    for (int j = 0; j < n; ++j) {
      const int pick = draw_uniform_int(rng, j, 48);
      std::swap(interior[j], interior[pick]);
      c.times.push_back(sites[interior[j]]);
    }
    std::sort(c.times.begin(), c.times.end());
    c.times.erase(std::unique(c.times.begin(), c.times.end()), c.times.end());
    c.values.resize(c.times.size());
    draw_scores(sim, static_cast<std::size_t>(i), rng);
    fill_values(sim, static_cast<std::size_t>(i));
  }
  return sim;
}

SimulatedSample generate_model2(int num_curves, std::uint64_t seed) {
  SimulatedSample sim = start(model2_truth(), num_curves);
  Rng rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  for (int i = 0; i < num_curves; ++i) {
    auto& c = sim.sample.curves[i];
    c.id = std::to_string(i + 1);
    const int n = draw_uniform_int(rng, 3, 5);
    for (int j = 0; j < n; ++j) c.times.push_back(unit(rng));
    std::sort(c.times.begin(), c.times.end());
    c.times.erase(std::unique(c.times.begin(), c.times.end()), c.times.end());
    c.values.resize(c.times.size());
    draw_scores(sim, static_cast<std::size_t>(i), rng);
    fill_values(sim, static_cast<std::size_t>(i));
  }
  return sim;
}

SimulatedSample generate(int model, int num_curves, std::uint64_t seed) {
  if (model == 1) return generate_model1(num_curves, seed);
  if (model == 2) return generate_model2(num_curves, seed);
  throw Error(ErrorCode::InvalidArgument, "model must be 1 or 2");
}

SimulatedSample contaminate(const SimulatedSample& clean, double eps, std::uint64_t seed) {
  if (!(eps >= 0.0 && eps < 1.0)) throw Error(ErrorCode::InvalidArgument, "eps must lie in [0, 1)");
  SimulatedSample out = clean;
  if (eps == 0.0) return out;
  Rng rng(seed);
  std::bernoulli_distribution flag(eps);
  for (std::size_t i = 0; i < out.sample.size(); ++i) {
    if (!flag(rng)) continue;
    out.contaminated[i] = true;
    const auto row = static_cast<Eigen::Index>(i);
    if (out.truth.model == 1) {
      out.z(row, 1) = std::normal_distribution<double>(12.0, 1.0)(rng);
    } else {
      out.z(row, 1) = std::normal_distribution<double>(20.0, 0.25)(rng);
      out.z(row, 2) = std::normal_distribution<double>(25.0, 0.25)(rng);
    }
    for (int k = 0; k < out.truth.q(); ++k) {
      out.scores(row, k) = std::sqrt(out.truth.eigenvalues[k]) * out.z(row, k);
    }
    fill_values(out, i);
  }
  return out;
}

double frobenius_discrepancy(const Eigen::MatrixXd& estimate, const Eigen::MatrixXd& truth) {
  if (estimate.rows() != truth.rows() || estimate.cols() != truth.cols()) {
    throw Error(ErrorCode::InvalidArgument, "surfaces differ in shape");
  }
  return (estimate - truth).squaredNorm();
}

double alignment(std::span<const double> estimate, std::span<const double> truth, double dt) {
  if (estimate.size() != truth.size()) throw Error(ErrorCode::InvalidArgument, "length mismatch");
  double acc = 0.0;
  for (std::size_t m = 0; m < estimate.size(); ++m) acc += estimate[m] * truth[m];
  return std::min(1.0, std::abs(dt * acc));
}

namespace {

std::vector<double> mid_ranks(std::span<const double> x) {
  std::vector<std::size_t> order(x.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return x[i] < x[j]; });
  std::vector<double> ranks(x.size());
  std::size_t k = 0;
  while (k < order.size()) {
    std::size_t end = k;
    while (end + 1 < order.size() && x[order[end + 1]] == x[order[k]]) ++end;
    const double r = 0.5 * static_cast<double>(k + end) + 1.0;
    for (std::size_t m = k; m <= end; ++m) ranks[order[m]] = r;
    k = end + 1;
  }
  return ranks;
}

}  // namespace

double spearman_rho(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) {
    throw Error(ErrorCode::InvalidArgument, "spearman_rho needs equal lengths of at least 2");
  }
  const auto rx = mid_ranks(x);
  const auto ry = mid_ranks(y);
  const double n = static_cast<double>(x.size());
  const double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
  const double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < rx.size(); ++i) {
    sxy += (rx[i] - mx) * (ry[i] - my);
    sxx += (rx[i] - mx) * (rx[i] - mx);
    syy += (ry[i] - my) * (ry[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw Error(ErrorCode::DegenerateRanks, "constant input to spearman_rho");
  return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

ScoreMetrics score_metrics(const Eigen::MatrixXd& estimated, const Eigen::MatrixXd& truth,
                           const std::vector<bool>& contaminated) {
  if (estimated.rows() != truth.rows() || estimated.cols() > truth.cols() ||
      contaminated.size() != static_cast<std::size_t>(estimated.rows())) {
    throw Error(ErrorCode::InvalidArgument, "score matrices do not conform");
  }
  const Eigen::Index N = estimated.rows();
  const auto clean = static_cast<double>(std::count(contaminated.begin(), contaminated.end(), false));
  if (clean == 0.0) throw Error(ErrorCode::NoCleanCurves, "every curve is flagged as contaminated");
  ScoreMetrics out;
  for (Eigen::Index k = 0; k < estimated.cols(); ++k) {
    Eigen::VectorXd est = estimated.col(k);
    const Eigen::VectorXd tru = truth.col(k);
    bool flip = false;
    try {
      flip = spearman_rho(std::span<const double>(est.data(), N), std::span<const double>(tru.data(), N)) < 0.0;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::DegenerateRanks) throw;
    }
    if (flip) est = -est;
    double sse = 0.0, sse_clean = 0.0;
    for (Eigen::Index i = 0; i < N; ++i) {
      const double e2 = (est(i) - tru(i)) * (est(i) - tru(i));
      sse += e2;
      if (!contaminated[i]) sse_clean += e2;
    }
    out.mse.push_back(sse / static_cast<double>(N));
    out.m2.push_back(sse_clean / clean);
    out.flipped.push_back(flip);
  }
  return out;
}

ReplicationMetrics evaluate_fit(const FpcaFit& fit, const SimulatedSample& sim, int metric_components) {
  ReplicationMetrics row;
  row.ok = true;
  row.h_mean = fit.h_mean;
  row.h_cov = fit.h_cov;
  row.contaminated = static_cast<int>(std::count(sim.contaminated.begin(), sim.contaminated.end(), true));
  row.selected_components = fit.eigen.num_components;

  const GridSpec& grid = fit.surface.grid;
  const Eigen::MatrixXd truth_surface = sim.truth.surface(grid);
  row.frob_sq_raw = frobenius_discrepancy(fit.surface.values, truth_surface);
  row.frob_sq = row.frob_sq_raw / static_cast<double>(grid.size * grid.size);

  const int K = std::min(metric_components, sim.truth.q());
  const double dt = grid.step();
  for (int k = 0; k < K; ++k) {
    const double ratio = fit.eigen.eigenvalues[k] / sim.truth.eigenvalues[k];
    row.log_loss.push_back(ratio > 0.0 ? std::pow(std::log(ratio), 2) : std::numeric_limits<double>::infinity());
    row.rel_loss.push_back((ratio - 1.0) * (ratio - 1.0));

    std::vector<double> phi(static_cast<std::size_t>(grid.size));
    double norm = 0.0;
    for (int m = 0; m < grid.size; ++m) {
      phi[m] = sim.truth.eigenfunction(k, grid.point(m));
      norm += phi[m] * phi[m];
    }
    norm = std::sqrt(dt * norm);
    for (double& v : phi) v /= norm;
    const auto col = fit.eigen.eigenfunctions.col(k);
    row.alignment.push_back(alignment(std::span<const double>(col.data(), static_cast<std::size_t>(grid.size)), phi, dt));
  }

  const ScoreMatrix scores = K <= fit.scores.scores.cols()
                                 ? fit.scores
                                 : predict_scores(sim.sample, fit.mean, fit.surface, fit.eigen, fit.scores.delta, K);
  const ScoreMetrics sm = score_metrics(scores.scores.leftCols(K), sim.scores.leftCols(K), sim.contaminated);
  row.mse = sm.mse;
  row.m2 = sm.m2;
  return row;
}

namespace {

SimulatedSample replicate(const MonteCarloConfig& config, int r) {
  const std::uint64_t base = derive_seed(config.seed, static_cast<std::uint64_t>(r));
  const SimulatedSample clean = generate(config.model, config.num_curves, derive_seed(base, 1));
  return contaminate(clean, config.eps, derive_seed(base, 2));
}

FitConfig replication_config(const MonteCarloConfig& config, int r) {
  FitConfig fc = config.fit;
  fc.variant = config.variant;
  fc.seed = derive_seed(config.seed, static_cast<std::uint64_t>(r));
  fc.domain.reset();
  return fc;
}

}  // namespace

int SimulationReport::failures() const {
  return static_cast<int>(std::count_if(rows.begin(), rows.end(), [](const auto& r) { return !r.ok; }));
}

std::vector<double> SimulationReport::values(const std::string& metric, int k) const {
  std::vector<double> out;
  for (const auto& r : rows) {
    if (!r.ok) continue;
    if (metric == "frob_sq") out.push_back(r.frob_sq);
    else if (metric == "frob_sq_raw") out.push_back(r.frob_sq_raw);
    else if (metric == "selected_components") out.push_back(r.selected_components);
    else {
      const std::vector<double>* v = nullptr;
      if (metric == "log_loss") v = &r.log_loss;
      else if (metric == "rel_loss") v = &r.rel_loss;
      else if (metric == "alignment") v = &r.alignment;
      else if (metric == "mse") v = &r.mse;
      else if (metric == "m2") v = &r.m2;
      else throw Error(ErrorCode::InvalidArgument, "unknown metric '" + metric + "'");
      if (k < 0 || k >= static_cast<int>(v->size())) continue;
      out.push_back((*v)[k]);
    }
  }
  return out;
}

MetricSummary SimulationReport::summary(const std::string& metric, int k) const {
  std::vector<double> v = values(metric, k);
  MetricSummary s;
  s.count = static_cast<int>(v.size());
  if (v.empty()) {
    s.mean = s.median = std::numeric_limits<double>::quiet_NaN();
    return s;
  }
  std::sort(v.begin(), v.end());  // fixed summation order
  s.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  s.median = median(std::move(v));
  return s;
}

SimulationReport run_monte_carlo(const MonteCarloConfig& config) {
  if (config.replications < 1) throw Error(ErrorCode::InvalidArgument, "need at least one replication");
  SimulationReport report;
  report.config = config;
  report.rows.resize(static_cast<std::size_t>(config.replications));

  std::optional<double> h_mean = config.fit.h_mean;
  std::optional<double> h_cov = config.fit.h_cov;
  if (!config.reselect_bandwidths && (!h_mean || !h_cov)) {
    // Bandwidths chosen on the first replication are reused by all others.
    const SimulatedSample first = replicate(config, 0);
    FitConfig fc = replication_config(config, 0);
    const GridSpec grid = fc.grid_for(first.sample);
    const CvPlan plan = make_cv_plan(first.sample.size(), grid, fc.cv_folds, fc.seed, fc.cv_candidates);
    if (!h_mean) h_mean = cv_bandwidth_mean(first.sample, plan, fc).bandwidth;
    if (!h_cov) {
      const MeanFunctionEstimate mean = estimate_mean(first.sample, fc, *h_mean);
      h_cov = cv_bandwidth_cov(first.sample, mean, plan, fc).bandwidth;
    }
  }
  report.h_mean = h_mean.value_or(std::numeric_limits<double>::quiet_NaN());
  report.h_cov = h_cov.value_or(std::numeric_limits<double>::quiet_NaN());

  auto run_one = [&](int r) {
    ReplicationMetrics row;
    try {
      const SimulatedSample sim = replicate(config, r);
      FitConfig fc = replication_config(config, r);
      fc.h_mean = h_mean;
      fc.h_cov = h_cov;
      row = evaluate_fit(fit(sim.sample, fc), sim, config.metric_components);
    } catch (const std::exception& e) {
      row = ReplicationMetrics{};
      row.ok = false;
      row.error = e.what();
    }
    row.replication = r;
    report.rows[static_cast<std::size_t>(r)] = std::move(row);
  };

  const int jobs = std::max(1, std::min(config.jobs, config.replications));
  if (jobs == 1) {
    for (int r = 0; r < config.replications; ++r) run_one(r);
  } else {
    std::atomic<int> next{0};
    std::vector<std::thread> workers;
    for (int j = 0; j < jobs; ++j) {
      workers.emplace_back([&] {
        for (int r = next++; r < config.replications; r = next++) run_one(r);
      });
    }
    for (auto& w : workers) w.join();
  }
  return report;
}

}  // namespace rfpca
