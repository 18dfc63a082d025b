#pragma once

#include "ppfm/panel.hpp"
#include "ppfm/simulation.hpp"  // Strategy

#include <Eigen/Core>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace ppfm {

enum class LambdaMode { CvAllSectors, CvTargetSector, Fixed };

struct BacktestConfig {
  int window = 100;
  int rebalance_period = 21;  // trading days
  std::vector<Strategy> strategies{Strategy::Individual, Strategy::Joint};
  LambdaMode lambda_mode = LambdaMode::CvAllSectors;
  std::string target_sector;  // for CvTargetSector
  double correlation_threshold = 0.85;
  double fixed_lambda = 0.0;
  std::vector<double> lambda_grid;  // empty: scale-aware default per window
  int cv_folds = 5;
  double cv_c_tau = 0.5;  // threshold constant used inside the lambda CV
  std::vector<double> ctau_grid;  // empty: 0.0..3.0 step 0.1
  int ctau_repeats = 20;
  ThresholdRule rule = ThresholdRule::Soft;
  std::uint64_t seed = 0;
  int factor_kmax = 8;
  int fixed_num_factors = 0;  // 0: estimate at the first decision node
  int min_assets = 2;         // smallest solvable sector size per window
};

struct RebalanceRecord {
  std::string date;  // first holding date
  std::vector<std::string> assets;
  Eigen::VectorXd weights;
  double lambda = 0.0;
  double c_tau = 0.0;
};

/// Out-of-sample track for one (strategy, sector) pair. `returns` aligns with
/// the report's `dates`; days inside a skipped rebalance period are NaN.
struct StrategyTrack {
  Strategy strategy = Strategy::Individual;
  std::string sector;
  std::vector<double> returns;
  std::vector<RebalanceRecord> rebalances;
  double realized_sd = 0.0;
  double mean_return = 0.0;
  double cumulative_return = 0.0;  // compounded
  double simple_return = 0.0;      // plain sum
  std::optional<double> sharpe;    // omitted on zero realized sd
  int skipped_periods = 0;
  int missing_return_days = 0;
};

struct BacktestReport {
  std::vector<std::string> dates;  // out-of-sample dates
  std::vector<StrategyTrack> sectors;
  std::vector<StrategyTrack> aggregated;  // one per strategy, sector = "all"
};

/// Rolling-window, periodically rebalanced multi-sector backtest. At each
/// rebalance date the trailing `window` columns are reduced to complete
/// cases per sector, lambda and per-sector C_tau are re-selected, the chosen
/// strategy is fitted, and the resulting MVP weights are held until the next
/// rebalance. Factor counts are estimated once, at the first decision node.
BacktestReport rolling_backtest(const std::vector<ReturnPanel>& panels,
                                const BacktestConfig& config);

/// Target sector plus every sector whose equal-weighted-portfolio
/// correlation with it over [eval_start, eval_start+eval_length) meets the
/// threshold, measured once on complete-case windows.
std::vector<std::string> select_related_sectors(
    const std::string& target, const std::vector<ReturnPanel>& panels,
    double threshold, Eigen::Index eval_start, Eigen::Index eval_length);

/// Equal-weight combination of per-sector tracks (all same strategy, shared
/// dates): daily return is the mean across sectors with a value that day.
StrategyTrack aggregate_equal_weight(const std::vector<StrategyTrack>& tracks,
                                     const std::vector<std::string>& dates);

}  // namespace ppfm
