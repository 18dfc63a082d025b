#pragma once

#include <Eigen/Core>

#include <optional>

namespace ppfm {

struct PortfolioResult {
  Eigen::VectorXd weights;  // sums to 1; short positions allowed
  double est_risk = 0.0;    // per-period variance
  std::optional<double> est_sr;
  std::optional<double> realized_mean;
  std::optional<double> realized_sd;
  std::optional<double> realized_sr;
};

/// Minimum-variance weights Sigma^{-1}1 / (1'Sigma^{-1}1), one Cholesky
/// solve. Throws on non-SPD Sigma.
Eigen::VectorXd mvp_weights(const Eigen::MatrixXd& sigma);

/// 1 / (1'Sigma^{-1}1).
double min_risk(const Eigen::MatrixXd& sigma);

/// 1'Sigma^{-1}mu / sqrt(1'Sigma^{-1}1).
double est_sharpe(const Eigen::MatrixXd& sigma, const Eigen::VectorXd& mu);

struct RealizedStats {
  double mean = 0.0;
  double sd = 0.0;  // (T-1) denominator
  double sharpe = 0.0;
};

/// Out-of-sample stats of the portfolio return series w'r_t. Throws when the
/// standard deviation is zero.
RealizedStats realized_stats(const Eigen::VectorXd& w,
                             const Eigen::MatrixXd& r_test);

}  // namespace ppfm
