#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include "ppfm/portfolio.hpp"
#include "ppfm/simulation.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <random>

using namespace ppfm;

TEST_CASE("default_error_cov builds SPD five-asset blocks") {
  Eigen::MatrixXd S = default_error_cov(10);
  REQUIRE(S.rows() == 10);
  for (int i = 0; i < 10; ++i) {
    CHECK(S(i, i) == doctest::Approx(2e-4));
    for (int j = 0; j < 10; ++j) {
      if (i == j) continue;
      bool same_block = (i / 5) == (j / 5);
      CHECK(S(i, j) == doctest::Approx(same_block ? 0.2 * 2e-4 : 0.0));
    }
  }
  CHECK(is_positive_definite(S));
  // Sizes not divisible by five still work and stay SPD.
  CHECK(is_positive_definite(default_error_cov(7)));
}

TEST_CASE("simulate_factors has unit stationary variance") {
  std::mt19937_64 rng(301);
  const int T = 60000;
  Eigen::MatrixXd F = simulate_factors(2, T, 0.1, rng);
  REQUIRE(F.rows() == T);
  REQUIRE(F.cols() == 2);
  for (int k = 0; k < 2; ++k) {
    double mean = F.col(k).mean();
    double var = (F.col(k).array() - mean).square().sum() / (T - 1);
    CHECK(std::abs(mean) < 0.03);
    CHECK(var == doctest::Approx(1.0).epsilon(0.05));
  }
  // Determinism for a fixed stream.
  std::mt19937_64 a(5), b(5);
  CHECK((simulate_factors(1, 50, 0.1, a) - simulate_factors(1, 50, 0.1, b))
            .cwiseAbs()
            .maxCoeff() == 0.0);
}

TEST_CASE("simulate_sector composes loadings, factors, and errors") {
  std::mt19937_64 rng(302);
  Eigen::MatrixXd F = simulate_factors(2, 30, 0.1, rng);
  Eigen::VectorXd means(2), sds(2);
  means << 0.018, -0.001;
  sds << 0.0072, 0.0084;

  // With a zero error Cholesky factor the panel is exactly B F'.
  Eigen::MatrixXd zero_chol = Eigen::MatrixXd::Zero(8, 8);
  auto s = simulate_sector(8, F, means, sds, zero_chol, rng);
  REQUIRE(s.returns.rows() == 8);
  REQUIRE(s.returns.cols() == 30);
  CHECK((s.returns - s.loadings * F.transpose()).cwiseAbs().maxCoeff() <
        1e-15);

  // Loading moments match their calibration (Monte Carlo).
  std::mt19937_64 rng2(303);
  Eigen::MatrixXd bigF = simulate_factors(2, 5, 0.1, rng2);
  const int p = 20000;
  auto big = simulate_sector(p, bigF, means, sds, Eigen::MatrixXd::Zero(p, p),
                             rng2);
  for (int k = 0; k < 2; ++k) {
    double mean = big.loadings.col(k).mean();
    double sd = std::sqrt(
        (big.loadings.col(k).array() - mean).square().sum() / (p - 1));
    CHECK(mean == doctest::Approx(means(k)).epsilon(0.05));
    CHECK(sd == doctest::Approx(sds(k)).epsilon(0.05));
  }
}

TEST_CASE("simulated errors reproduce the requested covariance") {
  std::mt19937_64 rng(304);
  const int p = 6, T = 200000;
  Eigen::MatrixXd sigma_e = default_error_cov(p);
  Eigen::MatrixXd chol = Eigen::LLT<Eigen::MatrixXd>(sigma_e).matrixL();
  Eigen::MatrixXd F = Eigen::MatrixXd::Zero(T, 1);  // isolate the errors
  Eigen::VectorXd zero = Eigen::VectorXd::Zero(1);
  auto s = simulate_sector(p, F, zero, zero, chol, rng);
  Eigen::MatrixXd S = s.returns * s.returns.transpose() / T;
  CHECK((S - sigma_e).cwiseAbs().maxCoeff() < 5e-6);
}

TEST_CASE("scenario heterogeneity grows with the replacement count") {
  DGPConfig cfg;
  cfg.num_sectors = 16;
  cfg.assets_per_sector = 5;  // small: only the factor structure matters here
  cfg.train_periods = 60;
  cfg.test_periods = 10;

  double prev = -1.0;
  std::vector<ScenarioData> scenarios;
  for (int r = 0; r <= 6; ++r) {
    std::mt19937_64 rng(42);  // same stream for every scenario
    scenarios.push_back(build_scenario(cfg, r, rng));
    const auto& sc = scenarios.back();
    REQUIRE(sc.sectors.size() == 16);
    REQUIRE(sc.factors.size() == 16);
    CHECK(sc.heterogeneity > prev);
    prev = sc.heterogeneity;
  }
  // Total homogeneity: every sector uses the same factor matrix.
  for (int m = 1; m < 16; ++m)
    CHECK((scenarios[0].factors[m] - scenarios[0].factors[0])
              .cwiseAbs()
              .maxCoeff() == 0.0);
  CHECK(scenarios[0].heterogeneity == doctest::Approx(0.0));

  // Nesting: sector 1 of scenario r keeps its replaced factor in r+1
  // (slots are swapped in a fixed order, five per step).
  CHECK((scenarios[2].factors[1].col(0) - scenarios[1].factors[1].col(0))
            .cwiseAbs()
            .maxCoeff() == 0.0);
  // Sector 1 column 0 is in the first replacement block: differs from base.
  CHECK((scenarios[1].factors[1].col(0) - scenarios[0].factors[1].col(0))
            .cwiseAbs()
            .maxCoeff() > 0.0);
  // Column 1 of sector 1 is untouched until the second-factor blocks.
  CHECK((scenarios[1].factors[1].col(1) - scenarios[0].factors[1].col(1))
            .cwiseAbs()
            .maxCoeff() == 0.0);

  CHECK_THROWS_AS(
      [&] {
        std::mt19937_64 rng(1);
        return build_scenario(cfg, 7, rng);
      }(),
      std::invalid_argument);
}

TEST_CASE("error measures match direct computations") {
  std::mt19937_64 rng(305);
  const int p = 5;
  Eigen::MatrixXd A(p, p);
  std::normal_distribution<double> dist;
  for (int i = 0; i < p; ++i)
    for (int j = 0; j < p; ++j) A(i, j) = dist(rng);
  Eigen::MatrixXd sigma_true =
      A * A.transpose() + Eigen::MatrixXd::Identity(p, p);
  Eigen::MatrixXd sigma_hat = sigma_true;
  sigma_hat(0, 1) += 0.3;
  sigma_hat(1, 0) += 0.3;

  CHECK(cov_error(sigma_hat, sigma_true) ==
        doctest::Approx((sigma_hat - sigma_true).cwiseAbs().sum()));

  Eigen::VectorXd w_star = mvp_weights(sigma_true);
  Eigen::VectorXd w_hat = w_star;
  w_hat(0) += 0.1;
  w_hat(1) -= 0.1;
  CHECK(weight_error(w_hat, sigma_true) ==
        doctest::Approx((w_hat - w_star).cwiseAbs().sum()));
  CHECK(weight_error(w_star, sigma_true) == doctest::Approx(0.0));

  Eigen::MatrixXd r_test(p, 40);
  for (int i = 0; i < p; ++i)
    for (int t = 0; t < 40; ++t) r_test(i, t) = dist(rng);
  auto hat = realized_stats(w_hat, r_test);
  auto star = realized_stats(w_star, r_test);
  CHECK(risk_error(w_hat, r_test, w_star) ==
        doctest::Approx(std::abs(hat.sd - star.sd)));
  CHECK(sr_error(w_hat, r_test, w_star) ==
        doctest::Approx(std::abs(hat.sharpe - star.sharpe)));
}

TEST_CASE("run_study is deterministic across thread counts") {
  DGPConfig cfg;
  cfg.num_sectors = 16;  // replacement scenarios need the canonical layout
  cfg.assets_per_sector = 10;
  cfg.train_periods = 40;
  cfg.test_periods = 30;
  cfg.replications = 4;
  cfg.seed = 17;

  StudyOptions opts;
  opts.cv_folds = 3;
  opts.lambda_grid = {0.0, 0.01};

  std::vector<Strategy> strategies{Strategy::Individual, Strategy::Joint,
                                   Strategy::Pooled};
  opts.threads = 1;
  auto serial = run_study(cfg, {0, 3}, strategies, opts);
  opts.threads = 4;
  auto parallel = run_study(cfg, {0, 3}, strategies, opts);

  REQUIRE(serial.size() == 2);
  REQUIRE(parallel.size() == 2);
  for (int s = 0; s < 2; ++s) {
    CHECK(serial[s].replacements == parallel[s].replacements);
    CHECK(serial[s].heterogeneity == parallel[s].heterogeneity);
    for (auto strat : strategies) {
      const auto& a = serial[s].measures.at(strat);
      const auto& b = parallel[s].measures.at(strat);
      CHECK(a.cme == b.cme);
      CHECK(a.we == b.we);
      CHECK(a.riske == b.riske);
      CHECK(a.sre == b.sre);
      CHECK(std::isfinite(a.cme));
      CHECK(a.cme >= 0.0);
      CHECK(a.we >= 0.0);
      CHECK(a.riske >= 0.0);
      CHECK(a.sre >= 0.0);
    }
  }
  CHECK(strategy_name(Strategy::Individual) == "individual");
  CHECK(strategy_name(Strategy::Joint) == "joint");
  CHECK(strategy_name(Strategy::Pooled) == "pooled");
}
