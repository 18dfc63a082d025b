#pragma once

#include <Eigen/Core>

#include <string>
#include <vector>

namespace ppfm {

/// Per-sector factor model estimate. Identification: F'F/T = I_K, so the
/// projection onto the factor span is P = F F'/T.
struct FactorFit {
  Eigen::MatrixXd loadings;    // p x K
  Eigen::MatrixXd factors;     // T x K
  Eigen::MatrixXd projection;  // T x T
  Eigen::MatrixXd residuals;   // p x T
  int num_factors = 0;
  std::string sector_label;
};

/// Result of the multi-sector projection-penalized fit.
struct MultiFit {
  std::vector<FactorFit> fits;
  double lambda = 0.0;
  int iterations = 0;
  std::vector<double> loss_trace;  // joint loss after init and each sweep
  bool converged = false;
};

/// F (F'F)^{-1} F'. Throws on rank-deficient F. Under the F'F/T = I
/// normalization this equals F F'/T.
Eigen::MatrixXd projection_matrix(const Eigen::MatrixXd& F);

/// sqrt(T) times the eigenvectors of the K largest eigenvalues of a symmetric
/// T x T matrix, ordered by descending eigenvalue (stable in solver index on
/// ties). Each column is sign-flipped so its largest-magnitude entry is
/// positive, ties broken by lowest index.
Eigen::MatrixXd scaled_top_eigvecs(const Eigen::MatrixXd& V, int k);

/// Classic per-sector PCA: F = sqrt(T) eig_K(R'R), B = R F / T. With
/// `demean`, each asset's mean return is removed first.
FactorFit pca_single(const Eigen::MatrixXd& R, int k, bool demean = false);

/// Alternating multi-sector fit. Each sweep updates sectors in input order
/// with V^(m) = T^{-1}R_m'R_m - lambda T^{-1} sum_{j != m} (I - 2P^(j)) using
/// already-updated projections for j < m and previous-sweep ones for j > m.
/// Stops when the joint loss changes by less than `tol` or after `max_iter`
/// sweeps.
MultiFit ppfm_fit(const std::vector<Eigen::MatrixXd>& panels,
                  const std::vector<int>& num_factors, double lambda,
                  int max_iter = 50, double tol = 1e-8, bool demean = false);

/// sum_m T^{-1} ||R_m - B_m F_m'||_F^2
///   + (lambda/T) sum_{m < m'} ||P_m - P_m'||_F^2.
double joint_loss(const std::vector<Eigen::MatrixXd>& panels,
                  const std::vector<FactorFit>& fits, double lambda);

struct FactorCountEstimate {
  int by_penalty_1 = 0;  // g1 = (p+T)/(pT) log(pT/(p+T))
  int by_penalty_2 = 0;  // g2 = (p+T)/(pT) log(min(p,T))
  int combined = 0;      // integer part of the mean of the two
};

FactorCountEstimate estimate_num_factors_detail(const Eigen::MatrixXd& R,
                                                int k_max);
int estimate_num_factors(const Eigen::MatrixXd& R, int k_max);

/// Relatedness diagnostic: phi_i = sum_{j != i} ||P_i - P_j|| (spectral norm).
Eigen::VectorXd relatedness(const std::vector<FactorFit>& fits);

/// Scale for penalty grids: cross-sector average of mean(diag(T^{-1}R'R)).
double default_lambda_scale(const std::vector<Eigen::MatrixXd>& panels);

/// {0} plus {10^j * scale : j = -2..3}.
std::vector<double> default_lambda_grid(
    const std::vector<Eigen::MatrixXd>& panels);

}  // namespace ppfm
