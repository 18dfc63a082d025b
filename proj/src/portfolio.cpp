#include "ppfm/portfolio.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

namespace ppfm {

namespace {

Eigen::LLT<Eigen::MatrixXd> checked_llt(const Eigen::MatrixXd& sigma) {
  if (sigma.rows() != sigma.cols())
    throw std::invalid_argument("covariance matrix must be square");
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success)
    throw std::runtime_error("covariance matrix is singular or indefinite");
  return llt;
}

}  // namespace

Eigen::VectorXd mvp_weights(const Eigen::MatrixXd& sigma) {
  auto llt = checked_llt(sigma);
  Eigen::VectorXd x = llt.solve(Eigen::VectorXd::Ones(sigma.rows()));
  const double denom = x.sum();
  if (!(denom > 0.0) || !std::isfinite(denom))
    throw std::runtime_error("mvp_weights: 1'Sigma^{-1}1 is not positive");
  return x / denom;
}

double min_risk(const Eigen::MatrixXd& sigma) {
  auto llt = checked_llt(sigma);
  Eigen::VectorXd x = llt.solve(Eigen::VectorXd::Ones(sigma.rows()));
  const double denom = x.sum();
  if (!(denom > 0.0) || !std::isfinite(denom))
    throw std::runtime_error("min_risk: 1'Sigma^{-1}1 is not positive");
  return 1.0 / denom;
}

double est_sharpe(const Eigen::MatrixXd& sigma, const Eigen::VectorXd& mu) {
  if (mu.size() != sigma.rows())
    throw std::invalid_argument("est_sharpe: mu dimension mismatch");
  auto llt = checked_llt(sigma);
  Eigen::VectorXd x = llt.solve(Eigen::VectorXd::Ones(sigma.rows()));
  const double denom = x.sum();
  if (!(denom > 0.0) || !std::isfinite(denom))
    throw std::runtime_error("est_sharpe: 1'Sigma^{-1}1 is not positive");
  return x.dot(mu) / std::sqrt(denom);
}

RealizedStats realized_stats(const Eigen::VectorXd& w,
                             const Eigen::MatrixXd& r_test) {
  if (w.size() != r_test.rows())
    throw std::invalid_argument("realized_stats: dimension mismatch");
  const Eigen::Index T = r_test.cols();
  if (T < 2)
    throw std::invalid_argument("realized_stats: need at least 2 periods");
  Eigen::VectorXd series = r_test.transpose() * w;
  RealizedStats out;
  out.mean = series.mean();
  out.sd = std::sqrt((series.array() - out.mean).square().sum() /
                     static_cast<double>(T - 1));
  if (out.sd == 0.0)
    throw std::runtime_error("realized_stats: zero standard deviation");
  out.sharpe = out.mean / out.sd;
  return out;
}

}  // namespace ppfm
