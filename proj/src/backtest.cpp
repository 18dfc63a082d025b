#include "ppfm/backtest.hpp"

#include "ppfm/estimator.hpp"
#include "ppfm/portfolio.hpp"
#include "ppfm/tuning.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <stdexcept>
#include <tuple>

namespace ppfm {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (a + 1) +
                    0xbf58476d1ce4e5b9ull * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

void finalize_track(StrategyTrack& track) {
  std::vector<double> xs;
  xs.reserve(track.returns.size());
  for (double r : track.returns)
    if (!std::isnan(r)) xs.push_back(r);
  if (xs.empty()) return;
  double sum = 0.0, compound = 1.0;
  for (double r : xs) {
    sum += r;
    compound *= 1.0 + r;
  }
  track.simple_return = sum;
  track.cumulative_return = compound - 1.0;
  track.mean_return = sum / static_cast<double>(xs.size());
  if (xs.size() >= 2) {
    double ss = 0.0;
    for (double r : xs) ss += (r - track.mean_return) * (r - track.mean_return);
    track.realized_sd = std::sqrt(ss / static_cast<double>(xs.size() - 1));
    if (track.realized_sd > 0.0)
      track.sharpe = track.mean_return / track.realized_sd;
  }
}

struct SectorContext {
  std::map<std::string, Eigen::Index> row_of;  // asset id -> panel row
  int num_factors = 1;
};

}  // namespace

std::vector<std::string> select_related_sectors(
    const std::string& target, const std::vector<ReturnPanel>& panels,
    double threshold, Eigen::Index eval_start, Eigen::Index eval_length) {
  const ReturnPanel* target_panel = nullptr;
  for (const auto& p : panels)
    if (p.sector_label == target) target_panel = &p;
  if (!target_panel)
    throw std::invalid_argument("select_related_sectors: target sector '" +
                                target + "' not found");
  ReturnPanel tw = complete_case_window(*target_panel, eval_start, eval_length);
  std::vector<std::string> selected;
  for (const auto& p : panels) {
    if (p.sector_label == target) {
      selected.push_back(p.sector_label);
      continue;
    }
    ReturnPanel w = complete_case_window(p, eval_start, eval_length);
    if (equal_weight_correlation(tw, w) >= threshold)
      selected.push_back(p.sector_label);
  }
  return selected;
}

StrategyTrack aggregate_equal_weight(const std::vector<StrategyTrack>& tracks,
                                     const std::vector<std::string>& dates) {
  if (tracks.empty())
    throw std::invalid_argument("aggregate_equal_weight: no tracks");
  for (const auto& t : tracks)
    if (t.returns.size() != dates.size())
      throw std::invalid_argument(
          "aggregate_equal_weight: misaligned return series");
  StrategyTrack agg;
  agg.strategy = tracks.front().strategy;
  agg.sector = "all";
  agg.returns.assign(dates.size(), kNaN);
  for (std::size_t d = 0; d < dates.size(); ++d) {
    double sum = 0.0;
    int n = 0;
    for (const auto& t : tracks)
      if (!std::isnan(t.returns[d])) {
        sum += t.returns[d];
        ++n;
      }
    if (n > 0) agg.returns[d] = sum / n;
  }
  finalize_track(agg);
  return agg;
}

BacktestReport rolling_backtest(const std::vector<ReturnPanel>& panels,
                                const BacktestConfig& config) {
  const std::size_t M = panels.size();
  if (M == 0) throw std::invalid_argument("rolling_backtest: no panels");
  const auto& times = panels.front().times;
  for (const auto& p : panels) {
    p.validate();
    if (p.times != times)
      throw std::invalid_argument(
          "rolling_backtest: panels must share the same dates");
  }
  const Eigen::Index T = static_cast<Eigen::Index>(times.size());
  const Eigen::Index window = config.window;
  if (config.rebalance_period < 1 || window < config.rebalance_period)
    throw std::invalid_argument(
        "rolling_backtest: need window >= rebalance_period >= 1");
  if (T < window + config.rebalance_period)
    throw std::invalid_argument(
        "rolling_backtest: not enough history before the first rebalance");

  BacktestReport report;
  report.dates.assign(times.begin() + window, times.end());
  const std::size_t n_oos = report.dates.size();

  // Factor counts are fixed at the first decision node.
  std::vector<SectorContext> ctx(M);
  for (std::size_t m = 0; m < M; ++m) {
    for (Eigen::Index i = 0; i < panels[m].num_assets(); ++i)
      ctx[m].row_of[panels[m].assets[i]] = i;
    if (config.fixed_num_factors > 0) {
      ctx[m].num_factors = config.fixed_num_factors;
    } else {
      ReturnPanel w = complete_case_window(panels[m], 0, window);
      const int kmax = static_cast<int>(
          std::min<Eigen::Index>(config.factor_kmax,
                                 std::min(w.num_assets(), window)));
      ctx[m].num_factors =
          std::max(1, estimate_num_factors(w.values, std::max(kmax, 0)));
    }
  }

  const auto ctau_grid =
      config.ctau_grid.empty() ? default_ctau_grid() : config.ctau_grid;

  for (Strategy strategy : config.strategies) {
    std::vector<StrategyTrack> tracks(M);
    for (std::size_t m = 0; m < M; ++m) {
      tracks[m].strategy = strategy;
      tracks[m].sector = panels[m].sector_label;
      tracks[m].returns.assign(n_oos, kNaN);
    }

    for (Eigen::Index node = window; node < T;
         node += config.rebalance_period) {
      const Eigen::Index hold =
          std::min<Eigen::Index>(config.rebalance_period, T - node);

      std::vector<ReturnPanel> wins;
      std::vector<std::size_t> usable;
      for (std::size_t m = 0; m < M; ++m) {
        ReturnPanel w = complete_case_window(panels[m], node - window, window);
        const Eigen::Index need =
            std::max<Eigen::Index>({config.min_assets, 2,
                                    ctx[m].num_factors});
        if (w.num_assets() < need) {
          ++tracks[m].skipped_periods;
          continue;
        }
        usable.push_back(m);
        wins.push_back(std::move(w));
      }
      if (usable.empty()) continue;

      // (sector index into `usable`, weights, chosen lambda/c_tau)
      std::vector<std::tuple<std::size_t, Eigen::VectorXd, double, double>>
          chosen;

      try {
        if (strategy == Strategy::Pooled) {
          Eigen::Index p_total = 0;
          for (const auto& w : wins) p_total += w.num_assets();
          Eigen::MatrixXd stacked(p_total, window);
          Eigen::Index offset = 0;
          for (const auto& w : wins) {
            stacked.middleRows(offset, w.num_assets()) = w.values;
            offset += w.num_assets();
          }
          const int k_pool = config.fixed_num_factors > 0
                                 ? config.fixed_num_factors
                                 : 2;
          FactorFit fit = pca_single(stacked, k_pool);
          offset = 0;
          for (std::size_t u = 0; u < usable.size(); ++u) {
            const Eigen::Index p = wins[u].num_assets();
            // Sector covariance from the pooled fit: sector loading rows
            // against the common factors plus the sector's own residual
            // rows, thresholded at the sector scale.
            Eigen::MatrixXd resid = fit.residuals.middleRows(offset, p);
            const double ctau =
                select_ctau(resid, ctau_grid, config.ctau_repeats,
                            mix_seed(config.seed, node, usable[u] + 1),
                            config.rule)
                    .chosen;
            Eigen::MatrixXd sigma = assemble_return_cov(
                fit.loadings.middleRows(offset, p), factor_cov(fit.factors),
                sparse_residual_cov(resid, ctau, config.rule,
                                    /*check_pd=*/false));
            offset += p;
            chosen.emplace_back(u, mvp_weights(sigma), 0.0, ctau);
          }
        } else {
          std::vector<Eigen::MatrixXd> mats;
          std::vector<int> ks;
          for (std::size_t u = 0; u < usable.size(); ++u) {
            mats.push_back(wins[u].values);
            ks.push_back(ctx[usable[u]].num_factors);
          }
          double lambda = 0.0;
          if (strategy == Strategy::Joint) {
            if (config.lambda_mode == LambdaMode::Fixed) {
              lambda = config.fixed_lambda;
            } else {
              LambdaCVOptions cv;
              cv.folds = config.cv_folds;
              cv.c_tau = config.cv_c_tau;
              cv.rule = config.rule;
              cv.seed = mix_seed(config.seed, node, 0);
              if (config.lambda_mode == LambdaMode::CvTargetSector)
                for (std::size_t u = 0; u < usable.size(); ++u)
                  if (wins[u].sector_label == config.target_sector)
                    cv.target_sector = static_cast<int>(u);
              const auto grid = config.lambda_grid.empty()
                                    ? default_lambda_grid(mats)
                                    : config.lambda_grid;
              lambda = select_lambda(mats, ks, grid, cv).chosen;
            }
          }
          MultiFit fit = ppfm_fit(mats, ks, lambda);
          for (std::size_t u = 0; u < usable.size(); ++u) {
            const auto& sector_fit = fit.fits[u];
            const double ctau =
                select_ctau(sector_fit.residuals, ctau_grid,
                            config.ctau_repeats,
                            mix_seed(config.seed, node, usable[u] + 1),
                            config.rule)
                    .chosen;
            Eigen::MatrixXd sigma = assemble_return_cov(
                sector_fit.loadings, factor_cov(sector_fit.factors),
                sparse_residual_cov(sector_fit.residuals, ctau, config.rule,
                                    /*check_pd=*/false));
            chosen.emplace_back(u, mvp_weights(sigma), lambda, ctau);
          }
        }
      } catch (const std::exception&) {
        for (std::size_t m : usable) ++tracks[m].skipped_periods;
        continue;
      }

      for (const auto& [u, weights, lambda, ctau] : chosen) {
        const std::size_t m = usable[u];
        auto& track = tracks[m];
        RebalanceRecord rec;
        rec.date = times[node];
        rec.assets = wins[u].assets;
        rec.weights = weights;
        rec.lambda = lambda;
        rec.c_tau = ctau;
        track.rebalances.push_back(rec);

        for (Eigen::Index t = node; t < node + hold; ++t) {
          double r = 0.0;
          for (Eigen::Index i = 0;
               i < static_cast<Eigen::Index>(rec.assets.size()); ++i) {
            const double v =
                panels[m].values(ctx[m].row_of.at(rec.assets[i]), t);
            // Mid-period missing return: treated as 0, position retained.
            if (std::isnan(v))
              ++track.missing_return_days;
            else
              r += weights(i) * v;
          }
          track.returns[static_cast<std::size_t>(t - window)] = r;
        }
      }
    }

    for (auto& track : tracks) finalize_track(track);
    report.aggregated.push_back(aggregate_equal_weight(tracks, report.dates));
    for (auto& track : tracks) report.sectors.push_back(std::move(track));
  }
  return report;
}

}  // namespace ppfm
