#include "ppfm/tuning.hpp"

#include "ppfm/estimator.hpp"
#include "ppfm/portfolio.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>

namespace ppfm {

namespace {

Eigen::MatrixXd select_columns(const Eigen::MatrixXd& m,
                               const std::vector<Eigen::Index>& idx) {
  Eigen::MatrixXd out(m.rows(), static_cast<Eigen::Index>(idx.size()));
  for (std::size_t j = 0; j < idx.size(); ++j) out.col(j) = m.col(idx[j]);
  return out;
}

std::vector<std::vector<Eigen::Index>> make_folds(Eigen::Index T, int k,
                                                  std::uint64_t seed,
                                                  bool contiguous) {
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(T));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});
  if (!contiguous) {
    std::mt19937_64 rng(seed);
    std::shuffle(idx.begin(), idx.end(), rng);
  }
  std::vector<std::vector<Eigen::Index>> folds(static_cast<std::size_t>(k));
  const Eigen::Index base = T / k, extra = T % k;
  std::size_t pos = 0;
  for (int f = 0; f < k; ++f) {
    const Eigen::Index size = base + (f < extra ? 1 : 0);
    folds[f].assign(idx.begin() + pos, idx.begin() + pos + size);
    std::sort(folds[f].begin(), folds[f].end());
    pos += static_cast<std::size_t>(size);
  }
  return folds;
}

double validation_risk(const Eigen::VectorXd& w,
                       const Eigen::MatrixXd& r_valid) {
  Eigen::VectorXd series = r_valid.transpose() * w;
  const double mean = series.mean();
  return (series.array() - mean).square().sum() /
         static_cast<double>(series.size() - 1);
}

}  // namespace

LambdaCVResult select_lambda(const std::vector<Eigen::MatrixXd>& panels,
                             const std::vector<int>& num_factors,
                             const std::vector<double>& grid,
                             const LambdaCVOptions& opts) {
  const std::size_t M = panels.size();
  if (M == 0) throw std::invalid_argument("select_lambda: empty panel list");
  if (grid.empty()) throw std::invalid_argument("select_lambda: empty grid");
  if (opts.folds < 2) throw std::invalid_argument("select_lambda: folds < 2");
  for (double l : grid)
    if (l < 0.0) throw std::invalid_argument("select_lambda: lambda < 0");
  if (opts.target_sector >= static_cast<int>(M))
    throw std::invalid_argument("select_lambda: target sector out of range");

  const Eigen::Index T = panels.front().cols();
  const auto folds = make_folds(T, opts.folds, opts.seed,
                                opts.contiguous_folds);
  const int k_most = *std::max_element(num_factors.begin(), num_factors.end());
  for (const auto& fold : folds) {
    const Eigen::Index t_train = T - static_cast<Eigen::Index>(fold.size());
    if (fold.size() < 2 || t_train < k_most + 2)
      throw std::invalid_argument(
          "select_lambda: fold too small for estimation");
  }

  LambdaCVResult out;
  out.grid = grid;
  out.per_sector_risk = Eigen::MatrixXd::Zero(
      static_cast<Eigen::Index>(M), static_cast<Eigen::Index>(grid.size()));

  for (int f = 0; f < opts.folds; ++f) {
    const auto& valid_idx = folds[static_cast<std::size_t>(f)];
    std::vector<Eigen::Index> train_idx;
    train_idx.reserve(static_cast<std::size_t>(T) - valid_idx.size());
    std::size_t vpos = 0;
    for (Eigen::Index t = 0; t < T; ++t) {
      if (vpos < valid_idx.size() && valid_idx[vpos] == t)
        ++vpos;
      else
        train_idx.push_back(t);
    }
    std::vector<Eigen::MatrixXd> train(M), valid(M);
    for (std::size_t m = 0; m < M; ++m) {
      train[m] = select_columns(panels[m], train_idx);
      valid[m] = select_columns(panels[m], valid_idx);
    }
    for (std::size_t g = 0; g < grid.size(); ++g) {
      MultiFit fit = ppfm_fit(train, num_factors, grid[g], opts.max_iter,
                              opts.tol);
      for (std::size_t m = 0; m < M; ++m) {
        const auto& sector = fit.fits[m];
        Eigen::MatrixXd sigma = assemble_return_cov(
            sector.loadings, factor_cov(sector.factors),
            sparse_residual_cov(sector.residuals, opts.c_tau, opts.rule,
                                /*check_pd=*/false));
        // A candidate whose covariance is not usable for portfolio
        // construction is disqualified (infinite risk), not a hard error:
        // large penalties can leave an indefinite thresholded residual
        // covariance on unrelated sectors.
        double risk;
        try {
          risk = validation_risk(mvp_weights(sigma), valid[m]);
        } catch (const std::runtime_error&) {
          risk = std::numeric_limits<double>::infinity();
        }
        out.per_sector_risk(static_cast<Eigen::Index>(m),
                            static_cast<Eigen::Index>(g)) += risk;
      }
    }
  }
  out.per_sector_risk /= static_cast<double>(opts.folds);

  out.avg_risk.resize(grid.size());
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const auto col = out.per_sector_risk.col(static_cast<Eigen::Index>(g));
    out.avg_risk[g] = opts.target_sector >= 0 ? col(opts.target_sector)
                                              : col.mean();
  }

  out.chosen_index = 0;
  out.chosen = grid[0];
  for (std::size_t g = 1; g < grid.size(); ++g) {
    const bool better = out.avg_risk[g] < out.avg_risk[out.chosen_index];
    const bool tie_smaller = out.avg_risk[g] == out.avg_risk[out.chosen_index] &&
                             grid[g] < out.chosen;
    if (better || tie_smaller) {
      out.chosen_index = g;
      out.chosen = grid[g];
    }
  }
  return out;
}

std::vector<double> default_ctau_grid() {
  std::vector<double> grid;
  for (int i = 0; i <= 30; ++i) grid.push_back(0.1 * i);
  return grid;
}

CtauCVResult select_ctau(const Eigen::MatrixXd& residuals,
                         const std::vector<double>& grid, int repeats,
                         std::uint64_t seed, ThresholdRule rule) {
  if (grid.empty()) throw std::invalid_argument("select_ctau: empty grid");
  if (!std::is_sorted(grid.begin(), grid.end()))
    throw std::invalid_argument("select_ctau: grid must be sorted ascending");
  if (repeats < 1) throw std::invalid_argument("select_ctau: repeats < 1");
  const Eigen::Index T = residuals.cols();
  const Eigen::Index ta = 2 * T / 3;
  if (ta < 2 || T - ta < 2)
    throw std::invalid_argument("select_ctau: too few observations to split");

  std::mt19937_64 rng(seed);
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(T));
  std::iota(idx.begin(), idx.end(), Eigen::Index{0});

  CtauCVResult out;
  out.grid = grid;
  out.avg_frobenius_loss.assign(grid.size(), 0.0);
  std::vector<bool> feasible(grid.size(), true);

  for (int j = 0; j < repeats; ++j) {
    std::shuffle(idx.begin(), idx.end(), rng);
    std::vector<Eigen::Index> a(idx.begin(), idx.begin() + ta);
    std::vector<Eigen::Index> b(idx.begin() + ta, idx.end());
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    Eigen::MatrixXd ea = select_columns(residuals, a);
    Eigen::MatrixXd s_a = sample_cov(ea);
    Eigen::MatrixXd base_tau = adaptive_thresholds(ea, 1.0);
    Eigen::MatrixXd s_b = sample_cov(select_columns(residuals, b));
    for (std::size_t g = 0; g < grid.size(); ++g) {
      SparseCovariance est = threshold_cov(s_a, grid[g] * base_tau, rule);
      if (!est.positive_definite) feasible[g] = false;
      out.avg_frobenius_loss[g] +=
          (est.matrix - s_b).squaredNorm() / static_cast<double>(repeats);
    }
  }

  std::size_t first_feasible = grid.size();
  for (std::size_t g = 0; g < grid.size(); ++g)
    if (feasible[g]) {
      first_feasible = g;
      break;
    }
  if (first_feasible == grid.size())
    throw std::runtime_error(
        "select_ctau: no grid value gives a positive-definite estimator; "
        "extend the grid to larger C_tau");
  out.c_min = grid[first_feasible];

  std::size_t best = first_feasible;
  for (std::size_t g = first_feasible + 1; g < grid.size(); ++g)
    if (feasible[g] && out.avg_frobenius_loss[g] < out.avg_frobenius_loss[best])
      best = g;
  out.chosen = grid[best];
  return out;
}

}  // namespace ppfm
