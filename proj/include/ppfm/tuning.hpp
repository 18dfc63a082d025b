#pragma once

#include "ppfm/covariance.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <vector>

namespace ppfm {

struct LambdaCVResult {
  std::vector<double> grid;
  std::vector<double> avg_risk;            // one per candidate
  Eigen::MatrixXd per_sector_risk;         // M x |grid|, fold-averaged
  double chosen = 0.0;
  std::size_t chosen_index = 0;
};

struct LambdaCVOptions {
  int folds = 5;
  std::uint64_t seed = 0;
  bool contiguous_folds = false;  // contiguous blocks for serially dependent data
  int target_sector = -1;         // >= 0: minimize risk for that sector only
  double c_tau = 0.5;
  ThresholdRule rule = ThresholdRule::Soft;
  int max_iter = 50;
  double tol = 1e-8;
};

/// k-fold cross-validation for the projection penalty. Time indices are
/// randomly partitioned once and shared across sectors; for each fold and
/// candidate the model is fit on the training columns and the per-sector MVP
/// risk is evaluated on the held-out columns. Ties are broken toward the
/// smaller lambda (first occurrence among equal values).
LambdaCVResult select_lambda(const std::vector<Eigen::MatrixXd>& panels,
                             const std::vector<int>& num_factors,
                             const std::vector<double>& grid,
                             const LambdaCVOptions& opts = {});

struct CtauCVResult {
  std::vector<double> grid;
  std::vector<double> avg_frobenius_loss;  // one per candidate
  double chosen = 0.0;
  double c_min = 0.0;  // smallest grid value PD-feasible in every split
};

/// Default grid 0.0..3.0 step 0.1.
std::vector<double> default_ctau_grid();

/// Repeats N random splits of the time axis into A (floor(2T/3) columns) and
/// B; thresholds the subset-A covariance at each candidate and accumulates
/// the Frobenius distance to the subset-B sample covariance. The feasible
/// minimizer over candidates whose subset-A estimator is positive definite in
/// all splits is returned. Throws when no candidate is feasible.
CtauCVResult select_ctau(const Eigen::MatrixXd& residuals,
                         const std::vector<double>& grid, int repeats,
                         std::uint64_t seed,
                         ThresholdRule rule = ThresholdRule::Soft);

}  // namespace ppfm
