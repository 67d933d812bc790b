#pragma once

// K-fold cross-validation of the mean and covariance bandwidths. Folds are
// formed from whole curves.

#include <cstdint>
#include <vector>

#include "rfpca/fpca.hpp"

namespace rfpca {

struct CvPlan {
  int folds = 5;
  std::vector<double> candidates;  // ascending bandwidths
  std::vector<int> fold_of_curve;
};

/// Eight log-spaced bandwidths from 2 grid steps to half the domain.
std::vector<double> default_bandwidth_candidates(const GridSpec& grid);

/// Seeded random permutation of curves dealt round-robin into folds. An
/// empty `candidates` selects the default grid.
CvPlan make_cv_plan(std::size_t num_curves, const GridSpec& grid, int folds, std::uint64_t seed,
                    std::vector<double> candidates = {});

struct CvResult {
  double bandwidth = 0.0;
  std::vector<double> criterion;  // per candidate; +inf marks a failed candidate
};

/// Scale of the pooled held-out residuals: Bisquare M-scale (c = 1.54764,
/// b = 1/2) for ROB, mean square for LS.
double cv_criterion(std::span<const double> residuals, Variant variant);

CvResult cv_bandwidth_mean(const SparseFunctionalSample& sample, const CvPlan& plan,
                           const FitConfig& config);

CvResult cv_bandwidth_cov(const SparseFunctionalSample& sample, const MeanFunctionEstimate& mean,
                          const CvPlan& plan, const FitConfig& config);

}  // namespace rfpca
