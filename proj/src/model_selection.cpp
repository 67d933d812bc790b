#include "rfpca/model_selection.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "rfpca/errors.hpp"
#include "rfpca/rng.hpp"

namespace rfpca {

std::vector<double> default_bandwidth_candidates(const GridSpec& grid) {
  constexpr int kCount = 8;
  const double lo = 2.0 * grid.step();
  const double hi = 0.5 * (grid.b - grid.a);
  std::vector<double> out(kCount);
  for (int k = 0; k < kCount; ++k) {
    out[k] = lo * std::pow(hi / lo, static_cast<double>(k) / (kCount - 1));
  }
  return out;
}

CvPlan make_cv_plan(std::size_t num_curves, const GridSpec& grid, int folds, std::uint64_t seed,
                    std::vector<double> candidates) {
  if (folds < 2) throw Error(ErrorCode::InvalidArgument, "cross-validation needs at least two folds");
  if (num_curves < static_cast<std::size_t>(folds)) {
    throw Error(ErrorCode::InvalidArgument, "fewer curves than folds");
  }
  CvPlan plan;
  plan.folds = folds;
  plan.candidates = candidates.empty() ? default_bandwidth_candidates(grid) : std::move(candidates);
  for (double h : plan.candidates) {
    if (!(h > 0.0)) throw Error(ErrorCode::InvalidArgument, "bandwidth candidates must be positive");
  }
  std::sort(plan.candidates.begin(), plan.candidates.end());

  std::vector<std::size_t> perm(num_curves);
  std::iota(perm.begin(), perm.end(), std::size_t{0});
  Rng rng(derive_seed(seed, 0xC0FFEE));
  shuffle(perm, rng);
  plan.fold_of_curve.assign(num_curves, 0);
  for (std::size_t k = 0; k < num_curves; ++k) plan.fold_of_curve[perm[k]] = static_cast<int>(k % folds);
  return plan;
}

double cv_criterion(std::span<const double> residuals, Variant variant) {
  if (residuals.empty()) return std::numeric_limits<double>::infinity();
  if (variant == Variant::LeastSquares) {
    double acc = 0.0;
    for (double r : residuals) acc += r * r;
    return acc / static_cast<double>(residuals.size());
  }
  return mscale(residuals, MScaleSpec{}).scale;
}

namespace {

struct FoldSplit {
  SparseFunctionalSample train;
  SparseFunctionalSample test;
};

std::vector<FoldSplit> split_folds(const SparseFunctionalSample& sample, const CvPlan& plan) {
  if (plan.fold_of_curve.size() != sample.size()) {
    throw Error(ErrorCode::InvalidArgument, "fold assignment does not match the sample");
  }
  std::vector<FoldSplit> out(static_cast<std::size_t>(plan.folds));
  for (int f = 0; f < plan.folds; ++f) {
    std::vector<std::size_t> train, test;
    for (std::size_t i = 0; i < sample.size(); ++i) {
      (plan.fold_of_curve[i] == f ? test : train).push_back(i);
    }
    if (train.empty()) throw Error(ErrorCode::InvalidArgument, "a fold leaves no training curves");
    out[f].train = sample.subset(train);
    out[f].test = sample.subset(test);
  }
  return out;
}

// Smallest bandwidth among the minimizers.
CvResult pick(const std::vector<double>& candidates, std::vector<double> criterion) {
  CvResult out;
  out.criterion = std::move(criterion);
  std::size_t best = out.criterion.size();
  for (std::size_t k = 0; k < out.criterion.size(); ++k) {
    if (!std::isfinite(out.criterion[k])) continue;
    if (best == out.criterion.size() || out.criterion[k] < out.criterion[best]) best = k;
  }
  if (best == out.criterion.size()) {
    throw Error(ErrorCode::AllCandidatesFailed, "no bandwidth candidate produced a finite criterion");
  }
  out.bandwidth = candidates[best];
  return out;
}

bool recoverable(const Error& e) {
  return e.code() == ErrorCode::NoLocalData || e.code() == ErrorCode::NoConvergence ||
         e.code() == ErrorCode::InsufficientPairings;
}

}  // namespace

CvResult cv_bandwidth_mean(const SparseFunctionalSample& sample, const CvPlan& plan,
                           const FitConfig& config) {
  if (plan.candidates.empty()) throw Error(ErrorCode::InvalidArgument, "no bandwidth candidates");
  const auto folds = split_folds(sample, plan);
  FitConfig fold_config = config;
  fold_config.domain = std::make_pair(config.grid_for(sample).a, config.grid_for(sample).b);

  std::vector<double> criterion;
  std::vector<double> residuals;
  for (double h : plan.candidates) {
    residuals.clear();
    try {
      for (const auto& fold : folds) {
        const MeanFunctionEstimate mean = estimate_mean(fold.train, fold_config, h);
        for (const auto& c : fold.test.curves) {
          for (std::size_t j = 0; j < c.times.size(); ++j) residuals.push_back(c.values[j] - mean(c.times[j]));
        }
      }
      criterion.push_back(cv_criterion(residuals, config.variant));
    } catch (const Error& e) {
      if (!recoverable(e)) throw;
      criterion.push_back(std::numeric_limits<double>::infinity());
    }
  }
  return pick(plan.candidates, std::move(criterion));
}

CvResult cv_bandwidth_cov(const SparseFunctionalSample& sample, const MeanFunctionEstimate& mean,
                          const CvPlan& plan, const FitConfig& config) {
  if (plan.candidates.empty()) throw Error(ErrorCode::InvalidArgument, "no bandwidth candidates");
  const auto folds = split_folds(sample, plan);
  const GridSpec& grid = mean.grid;

  std::vector<std::vector<ObservationPair>> train_pairs, test_pairs;
  for (const auto& fold : folds) {
    train_pairs.push_back(centered_pairs(fold.train, mean));
    test_pairs.push_back(centered_pairs(fold.test, mean));
  }

  std::vector<double> criterion;
  std::vector<double> residuals;
  for (double h : plan.candidates) {
    residuals.clear();
    try {
      for (std::size_t f = 0; f < folds.size(); ++f) {
        int failed = 0;
        const Eigen::MatrixXd raw = slope_surface(train_pairs[f], grid, config, h, &failed);
        if (2 * failed > grid.size * (grid.size - 1)) {
          throw Error(ErrorCode::InsufficientPairings, "too few training pairs");
        }
        const Eigen::MatrixXd beta = bivariate_smooth(raw, config.smooth_steps);
        for (const auto& p : test_pairs[f]) {
          residuals.push_back(p.x_resp - interpolate(grid, beta, p.t_resp, p.t_cond) * p.x_cond);
        }
      }
      criterion.push_back(cv_criterion(residuals, config.variant));
    } catch (const Error& e) {
      if (!recoverable(e)) throw;
      criterion.push_back(std::numeric_limits<double>::infinity());
    }
  }
  return pick(plan.candidates, std::move(criterion));
}

}  // namespace rfpca
