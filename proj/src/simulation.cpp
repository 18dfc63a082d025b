#include "ppfm/simulation.hpp"

#include "ppfm/estimator.hpp"
#include "ppfm/parallel.hpp"
#include "ppfm/portfolio.hpp"
#include "ppfm/tuning.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

namespace ppfm {

namespace {

constexpr int kReplacementBlock = 5;
constexpr int kMaxReplacements = 6;

std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t a, std::uint64_t b) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (a + 1) +
                    0xbf58476d1ce4e5b9ull * (b + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

Eigen::MatrixXd thin_orthonormal(const Eigen::MatrixXd& F) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(F);
  return qr.householderQ() * Eigen::MatrixXd::Identity(F.rows(), F.cols());
}

double pairwise_projection_gap(const std::vector<Eigen::MatrixXd>& factors,
                               Eigen::Index window) {
  std::vector<Eigen::MatrixXd> bases;
  bases.reserve(factors.size());
  for (const auto& f : factors)
    bases.push_back(thin_orthonormal(f.topRows(window)));
  double total = 0.0;
  for (std::size_t i = 0; i < bases.size(); ++i)
    for (std::size_t j = i + 1; j < bases.size(); ++j) {
      const double cross = (bases[i].transpose() * bases[j]).squaredNorm();
      total += static_cast<double>(bases[i].cols() + bases[j].cols()) -
               2.0 * cross;
    }
  return total;
}

// Covariance for one sector. When the requested constant leaves an
// indefinite estimate, the threshold is raised in 0.1 steps to the smallest
// feasible value, mirroring the feasibility floor of the threshold
// cross-validation; once the residual part is diagonal no further raising
// can help and the matrix is returned as is.
Eigen::MatrixXd sector_cov(const Eigen::MatrixXd& loadings,
                           const Eigen::MatrixXd& factors,
                           const Eigen::MatrixXd& residuals, double c_tau,
                           ThresholdRule rule) {
  const Eigen::MatrixXd sigma_f = factor_cov(factors);
  double c = c_tau;
  for (;;) {
    SparseCovariance sp = sparse_residual_cov(residuals, c, rule,
                                              /*check_pd=*/false);
    Eigen::MatrixXd sigma = assemble_return_cov(loadings, sigma_f, sp);
    if (sp.nonzeros == 0 || is_positive_definite(sigma)) return sigma;
    c += 0.1;
  }
}

}  // namespace

Eigen::MatrixXd default_error_cov(int p) {
  if (p < 1) throw std::invalid_argument("default_error_cov: p < 1");
  constexpr double variance = 2e-4;
  constexpr double within_corr = 0.2;
  constexpr int block = 5;
  Eigen::MatrixXd sigma = Eigen::MatrixXd::Zero(p, p);
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j) {
      if (i == j)
        sigma(i, j) = variance;
      else if (i / block == j / block)
        sigma(i, j) = variance * within_corr;
    }
  return sigma;
}

Eigen::MatrixXd simulate_factors(int k, int T, double ar_sd,
                                 std::mt19937_64& rng) {
  if (k < 1 || T < 1)
    throw std::invalid_argument("simulate_factors: need k >= 1, T >= 1");
  std::normal_distribution<double> coef(0.0, ar_sd);
  std::normal_distribution<double> unit(0.0, 1.0);
  Eigen::MatrixXd f(T, k);
  for (int j = 0; j < k; ++j) {
    double a = coef(rng);
    while (std::abs(a) >= 1.0) a = coef(rng);
    const double innov_sd = std::sqrt(1.0 - a * a);
    double prev = 0.0;
    for (int t = 0; t < T; ++t) {
      prev = a * prev + innov_sd * unit(rng);
      f(t, j) = prev;
    }
  }
  return f;
}

SectorSample simulate_sector(int p, const Eigen::MatrixXd& factors,
                             const Eigen::VectorXd& loading_means,
                             const Eigen::VectorXd& loading_sds,
                             const Eigen::MatrixXd& error_chol,
                             std::mt19937_64& rng) {
  const Eigen::Index k = factors.cols(), T = factors.rows();
  if (loading_means.size() != k || loading_sds.size() != k)
    throw std::invalid_argument("simulate_sector: loading parameter length");
  if (error_chol.rows() != p)
    throw std::invalid_argument("simulate_sector: error covariance dimension");
  std::normal_distribution<double> unit(0.0, 1.0);

  SectorSample out;
  out.loadings.resize(p, k);
  for (int i = 0; i < p; ++i)
    for (Eigen::Index j = 0; j < k; ++j)
      out.loadings(i, j) = loading_means(j) + loading_sds(j) * unit(rng);

  Eigen::MatrixXd noise(p, T);
  for (Eigen::Index t = 0; t < T; ++t)
    for (int i = 0; i < p; ++i) noise(i, t) = unit(rng);
  out.returns = out.loadings * factors.transpose() + error_chol * noise;
  return out;
}

ScenarioData build_scenario(const DGPConfig& config, int replacements,
                            std::mt19937_64& rng) {
  if (replacements < 0 || replacements > kMaxReplacements)
    throw std::invalid_argument("build_scenario: replacements must be 0..6");
  const int M = config.num_sectors, K = config.num_factors;
  if (replacements > 0 && (M != 16 || K != 2))
    throw std::invalid_argument(
        "build_scenario: the replacement schedule requires M=16, K=2");
  const int T = config.train_periods + config.test_periods;

  Eigen::MatrixXd sigma_e = config.error_cov
                                ? *config.error_cov
                                : default_error_cov(config.assets_per_sector);
  Eigen::LLT<Eigen::MatrixXd> llt(sigma_e);
  if (llt.info() != Eigen::Success)
    throw std::invalid_argument("build_scenario: error_cov is not SPD");
  Eigen::MatrixXd chol = llt.matrixL();

  // Baseline shared factors, then the full bank of replacement series in
  // schedule order so scenario r+1 extends scenario r under the same stream.
  Eigen::MatrixXd baseline = simulate_factors(K, T, config.ar_coef_sd, rng);
  const int num_slots = (M - 1) * K;
  std::vector<Eigen::MatrixXd> bank;
  if (M == 16 && K == 2) {
    bank.reserve(static_cast<std::size_t>(num_slots));
    for (int s = 0; s < num_slots; ++s)
      bank.push_back(simulate_factors(1, T, config.ar_coef_sd, rng));
  }

  ScenarioData data;
  data.error_cov = sigma_e;
  data.factors.assign(static_cast<std::size_t>(M), baseline);
  for (int s = 0; s < replacements * kReplacementBlock; ++s) {
    const int sector = 1 + s % (M - 1);
    const int column = s / (M - 1);
    data.factors[static_cast<std::size_t>(sector)].col(column) =
        bank[static_cast<std::size_t>(s)];
  }

  data.sectors.reserve(static_cast<std::size_t>(M));
  for (int m = 0; m < M; ++m)
    data.sectors.push_back(simulate_sector(
        config.assets_per_sector, data.factors[static_cast<std::size_t>(m)],
        config.loading_means, config.loading_sds, chol, rng));

  data.heterogeneity =
      pairwise_projection_gap(data.factors, config.train_periods);
  return data;
}

double weight_error(const Eigen::VectorXd& w_hat,
                    const Eigen::MatrixXd& sigma_true) {
  return (w_hat - mvp_weights(sigma_true)).lpNorm<1>();
}

double cov_error(const Eigen::MatrixXd& sigma_hat,
                 const Eigen::MatrixXd& sigma_true) {
  if (sigma_hat.rows() != sigma_true.rows() ||
      sigma_hat.cols() != sigma_true.cols())
    throw std::invalid_argument("cov_error: dimension mismatch");
  return (sigma_hat - sigma_true).cwiseAbs().sum();
}

double risk_error(const Eigen::VectorXd& w_hat, const Eigen::MatrixXd& r_test,
                  const Eigen::VectorXd& w_star) {
  return std::abs(realized_stats(w_hat, r_test).sd -
                  realized_stats(w_star, r_test).sd);
}

double sr_error(const Eigen::VectorXd& w_hat, const Eigen::MatrixXd& r_test,
                const Eigen::VectorXd& w_star) {
  return std::abs(realized_stats(w_hat, r_test).sharpe -
                  realized_stats(w_star, r_test).sharpe);
}

std::string strategy_name(Strategy s) {
  switch (s) {
    case Strategy::Individual:
      return "individual";
    case Strategy::Joint:
      return "joint";
    case Strategy::Pooled:
      return "pooled";
  }
  return "unknown";
}

namespace {

struct ReplicationOutcome {
  bool failed = false;
  std::string error;
  double heterogeneity = 0.0;
  std::map<Strategy, MeasureRow> measures;
};

MeasureRow sector_measures(const Eigen::VectorXd& w_hat,
                           const Eigen::MatrixXd& sigma_hat,
                           const Eigen::MatrixXd& sigma_true,
                           const Eigen::MatrixXd& r_test,
                           const Eigen::VectorXd& w_star) {
  MeasureRow row;
  row.cme = cov_error(sigma_hat, sigma_true);
  row.we = (w_hat - w_star).lpNorm<1>();
  row.riske = risk_error(w_hat, r_test, w_star);
  row.sre = sr_error(w_hat, r_test, w_star);
  return row;
}

void accumulate(MeasureRow& acc, const MeasureRow& row, double scale) {
  acc.cme += row.cme * scale;
  acc.we += row.we * scale;
  acc.riske += row.riske * scale;
  acc.sre += row.sre * scale;
}

ReplicationOutcome run_replication(const DGPConfig& config, int scenario,
                                   int rep,
                                   const std::vector<Strategy>& strategies,
                                   const StudyOptions& opts) {
  ReplicationOutcome out;
  std::mt19937_64 rng(mix_seed(config.seed, static_cast<std::uint64_t>(
                                                scenario),
                               static_cast<std::uint64_t>(rep)));
  ScenarioData data = build_scenario(config, scenario, rng);
  out.heterogeneity = data.heterogeneity;

  const int M = config.num_sectors;
  const Eigen::Index t_train = config.train_periods;
  const Eigen::Index t_test = config.test_periods;
  std::vector<Eigen::MatrixXd> train(static_cast<std::size_t>(M));
  std::vector<Eigen::MatrixXd> test(static_cast<std::size_t>(M));
  std::vector<Eigen::MatrixXd> sigma_true(static_cast<std::size_t>(M));
  std::vector<Eigen::VectorXd> w_star(static_cast<std::size_t>(M));
  for (int m = 0; m < M; ++m) {
    const auto& sec = data.sectors[static_cast<std::size_t>(m)];
    train[m] = sec.returns.leftCols(t_train);
    test[m] = sec.returns.rightCols(t_test);
    // Population factor covariance is the identity by construction.
    sigma_true[m] =
        sec.loadings * sec.loadings.transpose() + data.error_cov;
    w_star[m] = mvp_weights(sigma_true[m]);
  }
  std::vector<int> num_factors(static_cast<std::size_t>(M),
                               config.num_factors);
  const double per_sector = 1.0 / static_cast<double>(M);

  // A strategy that cannot produce a usable covariance in this replication
  // (e.g. an indefinite thresholded residual block) is dropped from this
  // replication only; the other strategies keep their draws.
  for (Strategy strategy : strategies) try {
    MeasureRow avg;
    if (strategy == Strategy::Individual || strategy == Strategy::Joint) {
      MultiFit fit;
      if (strategy == Strategy::Individual) {
        fit = ppfm_fit(train, num_factors, 0.0);
      } else {
        std::vector<double> grid = opts.lambda_grid.empty()
                                       ? default_lambda_grid(train)
                                       : opts.lambda_grid;
        LambdaCVOptions cv;
        cv.folds = opts.cv_folds;
        cv.c_tau = opts.c_tau;
        cv.rule = opts.rule;
        cv.seed = mix_seed(config.seed ^ 0xa5a5a5a5a5a5a5a5ull,
                           static_cast<std::uint64_t>(scenario),
                           static_cast<std::uint64_t>(rep));
        fit = ppfm_fit(train, num_factors,
                       select_lambda(train, num_factors, grid, cv).chosen);
      }
      for (int m = 0; m < M; ++m) {
        const auto& sf = fit.fits[static_cast<std::size_t>(m)];
        Eigen::MatrixXd sigma = sector_cov(sf.loadings, sf.factors,
                                           sf.residuals, opts.c_tau,
                                           opts.rule);
        accumulate(avg,
                   sector_measures(mvp_weights(sigma), sigma, sigma_true[m],
                                   test[m], w_star[m]),
                   per_sector);
      }
    } else {
      Eigen::Index p_total = 0;
      for (const auto& r : train) p_total += r.rows();
      Eigen::MatrixXd stacked(p_total, t_train);
      Eigen::Index offset = 0;
      for (const auto& r : train) {
        stacked.middleRows(offset, r.rows()) = r;
        offset += r.rows();
      }
      FactorFit fit = pca_single(stacked, config.num_factors);
      offset = 0;
      for (int m = 0; m < M; ++m) {
        const Eigen::Index p = train[m].rows();
        // Per-sector covariance from the pooled fit: the sector's loading
        // rows against the common factors, with the sector's own residual
        // rows thresholded at the sector scale.
        Eigen::MatrixXd sigma =
            sector_cov(fit.loadings.middleRows(offset, p), fit.factors,
                       fit.residuals.middleRows(offset, p), opts.c_tau,
                       opts.rule);
        offset += p;
        accumulate(avg,
                   sector_measures(mvp_weights(sigma), sigma, sigma_true[m],
                                   test[m], w_star[m]),
                   per_sector);
      }
    }
    out.measures[strategy] = avg;
  } catch (const std::exception&) {
    // leave this strategy out of out.measures for this replication
  }
  return out;
}

}  // namespace

std::vector<ScenarioResult> run_study(const DGPConfig& config,
                                      const std::vector<int>& scenarios,
                                      const std::vector<Strategy>& strategies,
                                      const StudyOptions& opts) {
  std::vector<ScenarioResult> results;
  results.reserve(scenarios.size());
  for (int scenario : scenarios) {
    std::vector<ReplicationOutcome> outcomes(
        static_cast<std::size_t>(config.replications));
    parallel_for(config.replications, opts.threads, [&](int rep) {
      try {
        outcomes[static_cast<std::size_t>(rep)] =
            run_replication(config, scenario, rep, strategies, opts);
      } catch (const std::exception& e) {
        outcomes[static_cast<std::size_t>(rep)].failed = true;
        outcomes[static_cast<std::size_t>(rep)].error = e.what();
      }
    });

    ScenarioResult res;
    res.replacements = scenario;
    int ok = 0;
    std::map<Strategy, int> counts;
    for (const auto& o : outcomes) {
      if (o.failed) {
        ++res.failed_replications;
        continue;
      }
      ++ok;
      res.heterogeneity += o.heterogeneity;
      bool complete = true;
      for (Strategy s : strategies) {
        auto it = o.measures.find(s);
        if (it == o.measures.end()) {
          complete = false;
          continue;
        }
        ++counts[s];
        accumulate(res.measures[s], it->second, 1.0);
      }
      if (!complete) ++res.failed_replications;
    }
    if (ok == 0)
      throw std::runtime_error(
          "run_study: every replication failed (scenario " +
          std::to_string(scenario) + "; first error: " + outcomes[0].error +
          ")");
    res.heterogeneity /= ok;
    for (Strategy strategy : strategies) {
      const int n = counts[strategy];
      if (n == 0)
        throw std::runtime_error("run_study: strategy " +
                                 strategy_name(strategy) +
                                 " failed in every replication (scenario " +
                                 std::to_string(scenario) + ")");
      MeasureRow& row = res.measures[strategy];
      row.cme /= n;
      row.we /= n;
      row.riske /= n;
      row.sre /= n;
    }
    results.push_back(std::move(res));
  }
  return results;
}

}  // namespace ppfm
