#include "ppfm/estimator.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace ppfm {

namespace {

void flip_column_signs(Eigen::MatrixXd& m) {
  for (Eigen::Index c = 0; c < m.cols(); ++c) {
    Eigen::Index arg = 0;
    double best = std::abs(m(0, c));
    for (Eigen::Index r = 1; r < m.rows(); ++r) {
      const double v = std::abs(m(r, c));
      if (v > best) {
        best = v;
        arg = r;
      }
    }
    if (m(arg, c) < 0.0) m.col(c) = -m.col(c);
  }
}

int symmetric_rank(const Eigen::VectorXd& eigvals) {
  const double scale = eigvals.cwiseAbs().maxCoeff();
  if (scale <= 0.0) return 0;
  int rank = 0;
  for (Eigen::Index i = 0; i < eigvals.size(); ++i)
    if (eigvals(i) > 1e-12 * scale) ++rank;
  return rank;
}

Eigen::MatrixXd maybe_demean(const Eigen::MatrixXd& R, bool demean) {
  if (!demean) return R;
  return R.colwise() - R.rowwise().mean();
}

FactorFit fit_from_factors(const Eigen::MatrixXd& R, Eigen::MatrixXd F) {
  const double T = static_cast<double>(R.cols());
  FactorFit fit;
  fit.num_factors = static_cast<int>(F.cols());
  fit.loadings = R * F / T;
  fit.projection = F * F.transpose() / T;
  fit.residuals = R - fit.loadings * F.transpose();
  fit.factors = std::move(F);
  return fit;
}

}  // namespace

Eigen::MatrixXd projection_matrix(const Eigen::MatrixXd& F) {
  Eigen::MatrixXd gram = F.transpose() * F;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram,
                                                    Eigen::EigenvaluesOnly);
  if (symmetric_rank(es.eigenvalues()) < F.cols())
    throw std::invalid_argument("projection_matrix: F is rank-deficient");
  Eigen::LDLT<Eigen::MatrixXd> solver(gram);
  return F * solver.solve(F.transpose());
}

Eigen::MatrixXd scaled_top_eigvecs(const Eigen::MatrixXd& V, int k) {
  const Eigen::Index n = V.rows();
  if (k < 1 || k > n)
    throw std::invalid_argument("scaled_top_eigvecs: invalid k");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(V);
  if (es.info() != Eigen::Success)
    throw std::runtime_error("eigendecomposition failed");

  std::vector<Eigen::Index> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  const auto& vals = es.eigenvalues();
  std::stable_sort(order.begin(), order.end(),
                   [&](Eigen::Index a, Eigen::Index b) {
                     return vals(a) > vals(b);
                   });

  Eigen::MatrixXd F(n, k);
  for (int c = 0; c < k; ++c) F.col(c) = es.eigenvectors().col(order[c]);
  flip_column_signs(F);
  return std::sqrt(static_cast<double>(n)) * F;
}

FactorFit pca_single(const Eigen::MatrixXd& R, int k, bool demean) {
  const Eigen::Index p = R.rows(), T = R.cols();
  if (k < 1 || k > std::min(p, T))
    throw std::invalid_argument("pca_single: K must be in [1, min(p, T)]");
  Eigen::MatrixXd Rd = maybe_demean(R, demean);
  Eigen::MatrixXd gram = Rd.transpose() * Rd / static_cast<double>(T);
  {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram,
                                                      Eigen::EigenvaluesOnly);
    if (k > symmetric_rank(es.eigenvalues()))
      throw std::invalid_argument("pca_single: K exceeds the rank of R");
  }
  return fit_from_factors(Rd, scaled_top_eigvecs(gram, k));
}

double joint_loss(const std::vector<Eigen::MatrixXd>& panels,
                  const std::vector<FactorFit>& fits, double lambda) {
  if (panels.size() != fits.size())
    throw std::invalid_argument("joint_loss: panels/fits size mismatch");
  if (panels.empty()) throw std::invalid_argument("joint_loss: empty input");
  const double T = static_cast<double>(panels.front().cols());
  double loss = 0.0;
  for (std::size_t m = 0; m < panels.size(); ++m) {
    if (panels[m].rows() != fits[m].loadings.rows() ||
        panels[m].cols() != fits[m].factors.rows())
      throw std::invalid_argument("joint_loss: dimension mismatch");
    loss += (panels[m] - fits[m].loadings * fits[m].factors.transpose())
                .squaredNorm() /
            T;
  }
  if (lambda != 0.0) {
    for (std::size_t m = 0; m < fits.size(); ++m)
      for (std::size_t j = m + 1; j < fits.size(); ++j)
        loss += lambda / T *
                (fits[m].projection - fits[j].projection).squaredNorm();
  }
  return loss;
}

MultiFit ppfm_fit(const std::vector<Eigen::MatrixXd>& panels,
                  const std::vector<int>& num_factors, double lambda,
                  int max_iter, double tol, bool demean) {
  const std::size_t M = panels.size();
  if (M == 0) throw std::invalid_argument("ppfm_fit: empty panel list");
  if (num_factors.size() != M)
    throw std::invalid_argument("ppfm_fit: one factor count per panel needed");
  if (lambda < 0.0) throw std::invalid_argument("ppfm_fit: lambda < 0");
  const Eigen::Index T = panels.front().cols();
  for (const auto& R : panels)
    if (R.cols() != T)
      throw std::invalid_argument("ppfm_fit: panels must share T");

  std::vector<Eigen::MatrixXd> data(M);
  std::vector<Eigen::MatrixXd> gram(M);
  MultiFit out;
  out.lambda = lambda;
  out.fits.reserve(M);
  Eigen::MatrixXd proj_sum = Eigen::MatrixXd::Zero(T, T);
  for (std::size_t m = 0; m < M; ++m) {
    data[m] = maybe_demean(panels[m], demean);
    gram[m] = data[m].transpose() * data[m] / static_cast<double>(T);
    out.fits.push_back(pca_single(panels[m], num_factors[m], demean));
    proj_sum += out.fits[m].projection;
  }

  out.loss_trace.push_back(joint_loss(data, out.fits, lambda));
  const double shift = lambda * static_cast<double>(M - 1) /
                       static_cast<double>(T);

  for (int iter = 1; iter <= max_iter; ++iter) {
    for (std::size_t m = 0; m < M; ++m) {
      Eigen::MatrixXd V = gram[m];
      if (lambda > 0.0 && M > 1) {
        V += (2.0 * lambda / static_cast<double>(T)) *
             (proj_sum - out.fits[m].projection);
        V.diagonal().array() -= shift;
      }
      proj_sum -= out.fits[m].projection;
      out.fits[m] = fit_from_factors(data[m],
                                     scaled_top_eigvecs(V, num_factors[m]));
      proj_sum += out.fits[m].projection;
    }
    const double loss = joint_loss(data, out.fits, lambda);
    if (!std::isfinite(loss))
      throw std::runtime_error("ppfm_fit: non-finite loss");
    const double delta = std::abs(loss - out.loss_trace.back());
    out.loss_trace.push_back(loss);
    out.iterations = iter;
    if (delta < tol) {
      out.converged = true;
      break;
    }
  }
  return out;
}

FactorCountEstimate estimate_num_factors_detail(const Eigen::MatrixXd& R,
                                                int k_max) {
  const Eigen::Index p = R.rows(), T = R.cols();
  if (k_max < 0 || k_max > std::min(p, T))
    throw std::invalid_argument(
        "estimate_num_factors: K_max must be in [0, min(p, T)]");
  if (R.hasNaN())
    throw std::invalid_argument("estimate_num_factors: panel has missing");

  // ||R - T^{-1} R F(K) F(K)'||_F^2 equals the sum of the trailing
  // eigenvalues of R'R, so only the spectrum is needed.
  Eigen::MatrixXd gram = R.transpose() * R;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gram,
                                                    Eigen::EigenvaluesOnly);
  Eigen::VectorXd vals = es.eigenvalues().reverse();  // descending

  const double pd = static_cast<double>(p), Td = static_cast<double>(T);
  const double g1 = (pd + Td) / (pd * Td) * std::log(pd * Td / (pd + Td));
  const double g2 = (pd + Td) / (pd * Td) * std::log(std::min(pd, Td));

  double ssr = vals.sum();
  FactorCountEstimate best;
  double best1 = std::numeric_limits<double>::infinity();
  double best2 = best1;
  for (int k = 0; k <= k_max; ++k) {
    if (k > 0) ssr -= vals(k - 1);
    const double base = std::log(std::max(ssr / (pd * Td), 1e-300));
    const double c1 = base + k * g1;
    const double c2 = base + k * g2;
    if (c1 < best1) {
      best1 = c1;
      best.by_penalty_1 = k;
    }
    if (c2 < best2) {
      best2 = c2;
      best.by_penalty_2 = k;
    }
  }
  best.combined = (best.by_penalty_1 + best.by_penalty_2) / 2;
  return best;
}

int estimate_num_factors(const Eigen::MatrixXd& R, int k_max) {
  return estimate_num_factors_detail(R, k_max).combined;
}

Eigen::VectorXd relatedness(const std::vector<FactorFit>& fits) {
  const std::size_t M = fits.size();
  if (M < 2)
    throw std::invalid_argument("relatedness: need at least two fits");
  const Eigen::Index T = fits.front().projection.rows();
  for (const auto& f : fits)
    if (f.projection.rows() != T)
      throw std::invalid_argument("relatedness: fits must share T");

  Eigen::MatrixXd dist = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(M),
                                               static_cast<Eigen::Index>(M));
  for (std::size_t i = 0; i < M; ++i)
    for (std::size_t j = i + 1; j < M; ++j) {
      Eigen::MatrixXd diff = fits[i].projection - fits[j].projection;
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(
          diff, Eigen::EigenvaluesOnly);
      const double norm = es.eigenvalues().cwiseAbs().maxCoeff();
      dist(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = norm;
      dist(static_cast<Eigen::Index>(j), static_cast<Eigen::Index>(i)) = norm;
    }
  return dist.rowwise().sum();
}

double default_lambda_scale(const std::vector<Eigen::MatrixXd>& panels) {
  if (panels.empty())
    throw std::invalid_argument("default_lambda_scale: empty panel list");
  double s = 0.0;
  for (const auto& R : panels) {
    const double T = static_cast<double>(R.cols());
    s += R.squaredNorm() / (T * T);  // mean of diag(T^{-1} R'R)
  }
  return s / static_cast<double>(panels.size());
}

std::vector<double> default_lambda_grid(
    const std::vector<Eigen::MatrixXd>& panels) {
  const double s = default_lambda_scale(panels);
  std::vector<double> grid{0.0};
  for (int j = -2; j <= 3; ++j) grid.push_back(std::pow(10.0, j) * s);
  return grid;
}

}  // namespace ppfm
