#pragma once

#include <Eigen/Core>

namespace ppfm {

enum class ThresholdRule { Soft, Hard };

/// Residual covariance after entrywise adaptive thresholding.
struct SparseCovariance {
  Eigen::MatrixXd matrix;  // p x p symmetric
  double c_tau = 0.0;
  ThresholdRule rule = ThresholdRule::Soft;
  long nonzeros = 0;  // nonzero off-diagonal entries
  bool positive_definite = false;
};

/// S_ij = T^{-1} sum_t E_it E_jt (no mean subtraction).
Eigen::MatrixXd sample_cov(const Eigen::MatrixXd& E);

/// Sample covariance of a T x K factor matrix, F'F/T. Under the F'F/T = I
/// identification this is the identity.
Eigen::MatrixXd factor_cov(const Eigen::MatrixXd& F);

/// tau_ij = c_tau * (sqrt(log p / T) + p^{-1/2}) * sqrt(psi_ij) with
/// psi_ij = T^{-1} sum_t (E_it E_jt - s_ij)^2.
Eigen::MatrixXd adaptive_thresholds(const Eigen::MatrixXd& E, double c_tau);

/// Keeps the diagonal of S; off-diagonal entries pass through the shrinkage
/// rule (soft: sgn(z)(|z|-tau)+; hard: z 1{|z| >= tau}). Throws if S is
/// asymmetric beyond 1e-10.
SparseCovariance threshold_cov(const Eigen::MatrixXd& S,
                               const Eigen::MatrixXd& taus, ThresholdRule rule,
                               bool check_pd = true);

/// sample_cov + adaptive_thresholds + threshold_cov in one step.
SparseCovariance sparse_residual_cov(const Eigen::MatrixXd& E, double c_tau,
                                     ThresholdRule rule, bool check_pd = true);

/// B Sigma_f B' + Sigma_e.
Eigen::MatrixXd assemble_return_cov(const Eigen::MatrixXd& B,
                                    const Eigen::MatrixXd& sigma_f,
                                    const SparseCovariance& sigma_e);

/// Relative criterion: smallest eigenvalue > 1e-10 * largest.
bool is_positive_definite(const Eigen::MatrixXd& S);

/// Inverse via Cholesky. Throws (naming the smallest eigenvalue) when Sigma
/// is not positive definite; verifies Sigma * Omega = I to 1e-8 relative.
Eigen::MatrixXd precision(const Eigen::MatrixXd& sigma);

}  // namespace ppfm
