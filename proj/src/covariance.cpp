#include "ppfm/covariance.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>
#include <string>

namespace ppfm {

Eigen::MatrixXd sample_cov(const Eigen::MatrixXd& E) {
  if (E.cols() < 2)
    throw std::invalid_argument("sample_cov: need at least 2 observations");
  return E * E.transpose() / static_cast<double>(E.cols());
}

Eigen::MatrixXd factor_cov(const Eigen::MatrixXd& F) {
  return F.transpose() * F / static_cast<double>(F.rows());
}

Eigen::MatrixXd adaptive_thresholds(const Eigen::MatrixXd& E, double c_tau) {
  const Eigen::Index p = E.rows(), T = E.cols();
  if (p < 2 || T < 2)
    throw std::invalid_argument("adaptive_thresholds: need p >= 2, T >= 2");
  if (c_tau < 0.0)
    throw std::invalid_argument("adaptive_thresholds: c_tau < 0");
  const double pd = static_cast<double>(p), Td = static_cast<double>(T);
  const double theta = std::sqrt(std::log(pd) / Td) + 1.0 / std::sqrt(pd);

  Eigen::MatrixXd s = sample_cov(E);
  Eigen::MatrixXd sq = E.cwiseProduct(E);
  // psi_ij = T^{-1} sum_t (E_it E_jt)^2 - s_ij^2, clamped at 0 for roundoff
  Eigen::MatrixXd psi =
      (sq * sq.transpose() / Td - s.cwiseProduct(s)).cwiseMax(0.0);
  return c_tau * theta * psi.cwiseSqrt();
}

SparseCovariance threshold_cov(const Eigen::MatrixXd& S,
                               const Eigen::MatrixXd& taus, ThresholdRule rule,
                               bool check_pd) {
  const Eigen::Index p = S.rows();
  if (S.cols() != p || taus.rows() != p || taus.cols() != p)
    throw std::invalid_argument("threshold_cov: dimension mismatch");
  if ((S - S.transpose()).cwiseAbs().maxCoeff() > 1e-10)
    throw std::invalid_argument("threshold_cov: S is not symmetric");
  if (taus.minCoeff() < 0.0)
    throw std::invalid_argument("threshold_cov: negative threshold");

  SparseCovariance out;
  out.rule = rule;
  out.matrix = S;
  for (Eigen::Index i = 0; i < p; ++i)
    for (Eigen::Index j = 0; j < p; ++j) {
      if (i == j) continue;
      const double z = S(i, j), tau = taus(i, j);
      double v;
      if (rule == ThresholdRule::Soft) {
        v = std::abs(z) > tau ? (z > 0 ? z - tau : z + tau) : 0.0;
      } else {
        v = std::abs(z) >= tau ? z : 0.0;
      }
      out.matrix(i, j) = v;
      if (v != 0.0) ++out.nonzeros;
    }
  if (check_pd) out.positive_definite = is_positive_definite(out.matrix);
  return out;
}

SparseCovariance sparse_residual_cov(const Eigen::MatrixXd& E, double c_tau,
                                     ThresholdRule rule, bool check_pd) {
  SparseCovariance out = threshold_cov(
      sample_cov(E), adaptive_thresholds(E, c_tau), rule, check_pd);
  out.c_tau = c_tau;
  return out;
}

Eigen::MatrixXd assemble_return_cov(const Eigen::MatrixXd& B,
                                    const Eigen::MatrixXd& sigma_f,
                                    const SparseCovariance& sigma_e) {
  if (sigma_f.rows() != sigma_f.cols() || sigma_f.rows() != B.cols())
    throw std::invalid_argument("assemble_return_cov: Sigma_f dimension");
  if (sigma_e.matrix.rows() != B.rows())
    throw std::invalid_argument("assemble_return_cov: Sigma_e dimension");
  Eigen::MatrixXd sigma = B * sigma_f * B.transpose() + sigma_e.matrix;
  return (sigma + sigma.transpose()) / 2.0;
}

bool is_positive_definite(const Eigen::MatrixXd& S) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(S, Eigen::EigenvaluesOnly);
  const double lo = es.eigenvalues().minCoeff();
  const double hi = es.eigenvalues().maxCoeff();
  return lo > 1e-10 * hi && hi > 0.0;
}

Eigen::MatrixXd precision(const Eigen::MatrixXd& sigma) {
  const Eigen::Index p = sigma.rows();
  if (sigma.cols() != p)
    throw std::invalid_argument("precision: matrix must be square");
  Eigen::LLT<Eigen::MatrixXd> llt(sigma);
  if (llt.info() != Eigen::Success || !is_positive_definite(sigma)) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(sigma,
                                                      Eigen::EigenvaluesOnly);
    throw std::runtime_error(
        "precision: matrix is not positive definite (smallest eigenvalue " +
        std::to_string(es.eigenvalues().minCoeff()) + ")");
  }
  Eigen::MatrixXd omega = llt.solve(Eigen::MatrixXd::Identity(p, p));
  const double err = (sigma * omega - Eigen::MatrixXd::Identity(p, p))
                         .cwiseAbs()
                         .maxCoeff();
  if (err > 1e-8 * std::max(1.0, sigma.cwiseAbs().maxCoeff()))
    throw std::runtime_error("precision: inverse verification failed");
  return omega;
}

}  // namespace ppfm
