#include "ppfm/cli.hpp"

#include "ppfm/backtest.hpp"
#include "ppfm/covariance.hpp"
#include "ppfm/estimator.hpp"
#include "ppfm/io_json.hpp"
#include "ppfm/panel.hpp"
#include "ppfm/portfolio.hpp"
#include "ppfm/simulation.hpp"
#include "ppfm/tuning.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

namespace ppfm {

namespace {

constexpr const char* kVersion = "ppfm 0.1.0";

void write_manifest(const std::string& command, const nlohmann::json& config,
                    const std::vector<std::string>& outputs) {
  if (outputs.empty()) return;
  nlohmann::json hashes = nlohmann::json::object();
  for (const auto& path : outputs) hashes[path] = file_hash(path);
  write_json(outputs.front() + ".manifest.json",
             nlohmann::json{{"command", command},
                            {"config", config},
                            {"outputs", hashes}});
}

std::vector<Strategy> parse_strategies(const std::string& spec) {
  std::map<std::string, Strategy> names{{"individual", Strategy::Individual},
                                        {"joint", Strategy::Joint},
                                        {"pooled", Strategy::Pooled}};
  if (spec == "all")
    return {Strategy::Individual, Strategy::Joint, Strategy::Pooled};
  std::vector<Strategy> out;
  std::stringstream ss(spec);
  std::string token;
  while (std::getline(ss, token, ',')) {
    auto it = names.find(token);
    if (it == names.end())
      throw CLI::ValidationError("--strategy", "unknown strategy '" + token +
                                                   "'");
    out.push_back(it->second);
  }
  if (out.empty()) throw CLI::ValidationError("--strategy", "empty");
  return out;
}

struct PanelInputs {
  std::string returns_path;
  std::string sectors_path;
  std::string rf_path;
  bool transposed = false;
  int min_sector_size = 30;
};

void add_panel_options(CLI::App* cmd, PanelInputs& in, bool sectors_required) {
  cmd->add_option("--returns", in.returns_path,
                  "Wide CSV of returns (rows assets, columns dates)")
      ->required();
  auto* sectors = cmd->add_option("--sectors", in.sectors_path,
                                  "CSV of asset id, sector code");
  if (sectors_required) sectors->required();
  cmd->add_option("--rf", in.rf_path, "CSV of date, risk-free rate");
  cmd->add_flag("--transposed", in.transposed,
                "Input has dates as rows and assets as columns");
  cmd->add_option("--min-sector-size", in.min_sector_size,
                  "Drop sectors with fewer assets (default 30)");
}

std::vector<ReturnPanel> load_grouped(const PanelInputs& in) {
  ReturnPanel panel = load_panel(in.returns_path, in.transposed);
  if (!in.rf_path.empty()) panel = to_excess(panel, load_risk_free(in.rf_path));
  if (in.sectors_path.empty()) {
    panel.sector_label = panel.sector_label.empty() ? "all"
                                                    : panel.sector_label;
    return {panel};
  }
  SectorGroups groups =
      group_by_sector(panel, load_sector_map(in.sectors_path),
                      in.min_sector_size);
  if (groups.unmapped_dropped > 0)
    std::cerr << "warning: dropped " << groups.unmapped_dropped
              << " unmapped asset(s)\n";
  if (groups.panels.empty())
    throw std::runtime_error("no sector meets the minimum size");
  return groups.panels;
}

std::vector<ReturnPanel> complete_all(const std::vector<ReturnPanel>& panels) {
  std::vector<ReturnPanel> out;
  for (const auto& p : panels) {
    ReturnPanel c = complete_case_window(p, 0, p.num_periods());
    if (c.num_assets() < p.num_assets())
      std::cerr << "warning: sector '" << p.sector_label << "' dropped "
                << (p.num_assets() - c.num_assets())
                << " asset(s) with missing returns\n";
    out.push_back(std::move(c));
  }
  return out;
}

std::vector<int> resolve_factor_counts(const std::vector<ReturnPanel>& panels,
                                       int k, int kmax) {
  std::vector<int> ks;
  for (const auto& p : panels) {
    if (k > 0) {
      ks.push_back(k);
    } else {
      const int bound = static_cast<int>(
          std::min<Eigen::Index>(kmax, std::min(p.num_assets(),
                                                p.num_periods())));
      ks.push_back(std::max(1, estimate_num_factors(p.values, bound)));
    }
  }
  return ks;
}

void write_text(const std::string& path, const std::string& text) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << text;
}

// ---- estimate ----

int cmd_estimate(const PanelInputs& in, int k, int kmax, double lambda,
                 int max_iter, double tol, bool demean,
                 const std::string& out_path) {
  auto panels = complete_all(load_grouped(in));
  std::vector<Eigen::MatrixXd> mats;
  for (const auto& p : panels) mats.push_back(p.values);
  const auto ks = resolve_factor_counts(panels, k, kmax);
  MultiFit fit = ppfm_fit(mats, ks, lambda, max_iter, tol, demean);
  for (std::size_t m = 0; m < panels.size(); ++m)
    fit.fits[m].sector_label = panels[m].sector_label;
  write_json(out_path, to_json(fit));
  write_manifest("estimate",
                 nlohmann::json{{"returns", in.returns_path},
                                {"sectors", in.sectors_path},
                                {"rf", in.rf_path},
                                {"k", k},
                                {"kmax", kmax},
                                {"lambda", lambda},
                                {"max_iter", max_iter},
                                {"tol", tol},
                                {"demean", demean}},
                 {out_path});
  std::cout << "estimate: " << panels.size() << " sector(s), lambda=" << lambda
            << ", converged=" << (fit.converged ? "yes" : "no") << "\n";
  return 0;
}

// ---- tune ----

int cmd_tune(const PanelInputs& in, int k, int kmax,
             std::vector<double> lambda_grid, int folds, std::uint64_t seed,
             std::vector<double> ctau_grid, int ctau_repeats,
             const std::string& target, bool contiguous,
             const std::string& out_prefix) {
  auto panels = complete_all(load_grouped(in));
  std::vector<Eigen::MatrixXd> mats;
  for (const auto& p : panels) mats.push_back(p.values);
  const auto ks = resolve_factor_counts(panels, k, kmax);
  if (lambda_grid.empty()) lambda_grid = default_lambda_grid(mats);
  if (ctau_grid.empty()) ctau_grid = default_ctau_grid();

  LambdaCVOptions cv;
  cv.folds = folds;
  cv.seed = seed;
  cv.contiguous_folds = contiguous;
  if (!target.empty()) {
    for (std::size_t m = 0; m < panels.size(); ++m)
      if (panels[m].sector_label == target) cv.target_sector = static_cast<int>(m);
    if (cv.target_sector < 0)
      throw std::runtime_error("target sector '" + target + "' not found");
  }
  LambdaCVResult lam = select_lambda(mats, ks, lambda_grid, cv);

  std::string lambda_csv = "sector,lambda,avg_risk\n";
  for (std::size_t m = 0; m < panels.size(); ++m)
    for (std::size_t g = 0; g < lambda_grid.size(); ++g)
      lambda_csv += panels[m].sector_label + "," +
                    format_double(lambda_grid[g]) + "," +
                    format_double(lam.per_sector_risk(
                        static_cast<Eigen::Index>(m),
                        static_cast<Eigen::Index>(g))) +
                    "\n";
  const std::string lambda_path = out_prefix + "_lambda.csv";
  write_text(lambda_path, lambda_csv);

  MultiFit fit = ppfm_fit(mats, ks, lam.chosen);
  nlohmann::json ctau_chosen = nlohmann::json::object();
  std::string ctau_csv = "sector,c_tau,avg_frobenius_loss,feasible_min\n";
  for (std::size_t m = 0; m < panels.size(); ++m) {
    CtauCVResult res = select_ctau(fit.fits[m].residuals, ctau_grid,
                                   ctau_repeats, seed + m);
    for (std::size_t g = 0; g < ctau_grid.size(); ++g)
      ctau_csv += panels[m].sector_label + "," + format_double(ctau_grid[g]) +
                  "," + format_double(res.avg_frobenius_loss[g]) + "," +
                  format_double(res.c_min) + "\n";
    ctau_chosen[panels[m].sector_label] = res.chosen;
  }
  const std::string ctau_path = out_prefix + "_ctau.csv";
  write_text(ctau_path, ctau_csv);

  const std::string chosen_path = out_prefix + "_chosen.json";
  write_json(chosen_path, nlohmann::json{{"lambda", lam.chosen},
                                         {"lambda_avg_risk", lam.avg_risk},
                                         {"lambda_grid", lambda_grid},
                                         {"c_tau", ctau_chosen}});
  write_manifest("tune",
                 nlohmann::json{{"returns", in.returns_path},
                                {"sectors", in.sectors_path},
                                {"rf", in.rf_path},
                                {"k", k},
                                {"folds", folds},
                                {"seed", seed},
                                {"target", target},
                                {"ctau_repeats", ctau_repeats}},
                 {chosen_path, lambda_path, ctau_path});
  std::cout << "tune: chosen lambda=" << lam.chosen << "\n";
  return 0;
}

// ---- simulate ----

int cmd_simulate(int scenario, int reps, std::uint64_t seed, int p,
                 int sectors, int t_train, int t_test, double c_tau, int folds,
                 const std::string& strategies_spec, int threads,
                 const std::string& out_path, const std::string& fig_path) {
  DGPConfig config;
  config.assets_per_sector = p;
  config.num_sectors = sectors;
  config.train_periods = t_train;
  config.test_periods = t_test;
  config.replications = reps;
  config.seed = seed;

  std::vector<int> scenarios;
  if (scenario < 0)
    for (int s = 0; s <= 6; ++s) scenarios.push_back(s);
  else
    scenarios.push_back(scenario);

  StudyOptions opts;
  opts.c_tau = c_tau;
  opts.cv_folds = folds;
  opts.threads = threads;
  const auto strategies = parse_strategies(strategies_spec);

  const auto results = run_study(config, scenarios, strategies, opts);

  std::string table =
      "scenario,heterogeneity,strategy,cme,we,riske,sre,failed\n";
  for (const auto& res : results)
    for (const auto& [strategy, row] : res.measures)
      table += std::to_string(res.replacements) + "," +
               format_double(res.heterogeneity) + "," +
               strategy_name(strategy) + "," + format_double(row.cme) + "," +
               format_double(row.we) + "," + format_double(row.riske) + "," +
               format_double(row.sre) + "," +
               std::to_string(res.failed_replications) + "\n";
  write_text(out_path, table);

  std::vector<std::string> outputs{out_path};
  if (!fig_path.empty()) {
    std::string fig =
        "scenario,heterogeneity,diff_cme,diff_we,diff_riske,diff_sre\n";
    for (const auto& res : results) {
      if (!res.measures.count(Strategy::Individual) ||
          !res.measures.count(Strategy::Joint))
        continue;
      const auto& ind = res.measures.at(Strategy::Individual);
      const auto& joint = res.measures.at(Strategy::Joint);
      fig += std::to_string(res.replacements) + "," +
             format_double(res.heterogeneity) + "," +
             format_double(ind.cme - joint.cme) + "," +
             format_double(ind.we - joint.we) + "," +
             format_double(ind.riske - joint.riske) + "," +
             format_double(ind.sre - joint.sre) + "\n";
    }
    write_text(fig_path, fig);
    outputs.push_back(fig_path);
  }
  write_manifest("simulate",
                 nlohmann::json{{"scenario", scenario},
                                {"reps", reps},
                                {"seed", seed},
                                {"p", p},
                                {"sectors", sectors},
                                {"t_train", t_train},
                                {"t_test", t_test},
                                {"c_tau", c_tau},
                                {"folds", folds},
                                {"strategies", strategies_spec}},
                 outputs);
  std::cout << "simulate: " << results.size() << " scenario(s), " << reps
            << " replication(s)\n";
  return 0;
}

// ---- backtest ----

int cmd_backtest(const PanelInputs& in, const std::string& strategies_spec,
                 BacktestConfig config, const std::string& lambda_mode,
                 const std::string& out_path, const std::string& csv_path) {
  config.strategies = parse_strategies(strategies_spec);
  if (lambda_mode == "cv_all")
    config.lambda_mode = LambdaMode::CvAllSectors;
  else if (lambda_mode == "cv_target")
    config.lambda_mode = LambdaMode::CvTargetSector;
  else if (lambda_mode == "fixed")
    config.lambda_mode = LambdaMode::Fixed;
  else
    throw std::runtime_error("unknown lambda mode '" + lambda_mode + "'");

  auto panels = load_grouped(in);
  if (!config.target_sector.empty()) {
    const auto related = select_related_sectors(
        config.target_sector, panels, config.correlation_threshold, 0,
        config.window);
    std::vector<ReturnPanel> filtered;
    for (auto& p : panels)
      if (std::find(related.begin(), related.end(), p.sector_label) !=
          related.end())
        filtered.push_back(std::move(p));
    panels = std::move(filtered);
    std::cout << "backtest: target '" << config.target_sector << "' plus "
              << panels.size() - 1 << " related sector(s)\n";
  }

  BacktestReport report = rolling_backtest(panels, config);
  write_json(out_path, to_json(report));

  std::vector<std::string> outputs{out_path};
  if (!csv_path.empty()) {
    std::string csv = "strategy,sector,risk,cr,sr\n";
    auto emit = [&](const StrategyTrack& t) {
      csv += strategy_name(t.strategy) + "," + t.sector + "," +
             format_double(t.realized_sd) + "," +
             format_double(t.cumulative_return) + "," +
             (t.sharpe ? format_double(*t.sharpe) : std::string("")) + "\n";
    };
    for (const auto& t : report.sectors) emit(t);
    for (const auto& t : report.aggregated) emit(t);
    write_text(csv_path, csv);
    outputs.push_back(csv_path);
  }
  write_manifest("backtest",
                 nlohmann::json{{"returns", in.returns_path},
                                {"sectors", in.sectors_path},
                                {"rf", in.rf_path},
                                {"strategy", strategies_spec},
                                {"window", config.window},
                                {"rebalance", config.rebalance_period},
                                {"target", config.target_sector},
                                {"corr_threshold",
                                 config.correlation_threshold},
                                {"lambda_mode", lambda_mode},
                                {"lambda", config.fixed_lambda},
                                {"folds", config.cv_folds},
                                {"seed", config.seed},
                                {"k", config.fixed_num_factors},
                                {"kmax", config.factor_kmax}},
                 outputs);
  std::cout << "backtest: " << report.sectors.size() << " sector track(s)\n";
  return 0;
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"Multi-sector factor model portfolio toolkit"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  // estimate
  auto* est = app.add_subcommand(
      "estimate", "Fit the projection-penalized factor model");
  PanelInputs est_in;
  add_panel_options(est, est_in, /*sectors_required=*/false);
  int est_k = 0, est_kmax = 8, est_max_iter = 50;
  double est_lambda = 0.0, est_tol = 1e-8;
  bool est_demean = false;
  std::string est_out;
  est->add_option("--k", est_k, "Factors per sector (0: estimate)");
  est->add_option("--kmax", est_kmax, "Upper bound for factor estimation");
  est->add_option("--lambda", est_lambda, "Projection penalty");
  est->add_option("--max-iter", est_max_iter, "Maximum sweeps");
  est->add_option("--tol", est_tol, "Loss-change tolerance");
  est->add_flag("--demean", est_demean, "Per-asset demeaning before PCA");
  est->add_option("--out", est_out, "Output fit JSON")->required();

  // tune
  auto* tune = app.add_subcommand("tune",
                                  "Cross-validate lambda and C_tau");
  PanelInputs tune_in;
  add_panel_options(tune, tune_in, /*sectors_required=*/false);
  int tune_k = 0, tune_kmax = 8, tune_folds = 5, tune_ctau_repeats = 20;
  std::uint64_t tune_seed = 0;
  std::vector<double> tune_lambda_grid, tune_ctau_grid;
  std::string tune_target, tune_out;
  bool tune_contiguous = false;
  tune->add_option("--k", tune_k, "Factors per sector (0: estimate)");
  tune->add_option("--kmax", tune_kmax, "Upper bound for factor estimation");
  tune->add_option("--lambda-grid", tune_lambda_grid,
                   "Candidate lambdas (default: scale-aware)");
  tune->add_option("--folds", tune_folds, "CV folds");
  tune->add_option("--seed", tune_seed, "Random seed");
  tune->add_option("--ctau-grid", tune_ctau_grid,
                   "Candidate C_tau values (default 0..3 step 0.1)");
  tune->add_option("--ctau-repeats", tune_ctau_repeats, "C_tau CV repeats");
  tune->add_option("--target", tune_target,
                   "Minimize risk for this sector only");
  tune->add_flag("--contiguous", tune_contiguous, "Contiguous CV folds");
  tune->add_option("--out", tune_out, "Output path prefix")->required();

  // simulate
  auto* sim = app.add_subcommand("simulate",
                                 "Run the calibrated simulation study");
  int sim_scenario = -1, sim_reps = 50, sim_p = 50, sim_sectors = 16;
  int sim_t_train = 100, sim_t_test = 300, sim_folds = 5, sim_threads = 0;
  std::uint64_t sim_seed = 0;
  double sim_ctau = 0.5;
  std::string sim_strategies = "all", sim_out, sim_fig;
  sim->add_option("--scenario", sim_scenario,
                  "Replacement count 0..6 (-1: all)")
      ->check(CLI::Range(-1, 6));
  sim->add_option("--reps", sim_reps, "Replications per scenario");
  sim->add_option("--seed", sim_seed, "Random seed");
  sim->add_option("--p", sim_p, "Assets per sector");
  sim->add_option("--sectors", sim_sectors, "Number of sectors");
  sim->add_option("--t-train", sim_t_train, "Training periods");
  sim->add_option("--t-test", sim_t_test, "Test periods");
  sim->add_option("--ctau", sim_ctau, "Threshold constant");
  sim->add_option("--folds", sim_folds, "CV folds for lambda");
  sim->add_option("--strategies", sim_strategies,
                  "Comma list or 'all'");
  sim->add_option("--threads", sim_threads, "Parallel replications (0: auto)");
  sim->add_option("--out", sim_out, "Output table CSV")->required();
  sim->add_option("--fig-out", sim_fig,
                  "Heterogeneity-vs-error-difference CSV");

  // backtest
  auto* bt = app.add_subcommand("backtest",
                                "Rolling-window multi-sector backtest");
  PanelInputs bt_in;
  add_panel_options(bt, bt_in, /*sectors_required=*/true);
  BacktestConfig bt_config;
  std::string bt_strategies = "all", bt_lambda_mode = "cv_all";
  std::string bt_out, bt_csv;
  bt->add_option("--strategy", bt_strategies, "Comma list or 'all'");
  bt->add_option("--window", bt_config.window, "Training window (days)");
  bt->add_option("--rebalance", bt_config.rebalance_period,
                 "Rebalance period (days)");
  bt->add_option("--target", bt_config.target_sector,
                 "Target sector: keep only sectors correlated above the "
                 "threshold");
  bt->add_option("--corr-threshold", bt_config.correlation_threshold,
                 "Equal-weight correlation threshold");
  bt->add_option("--lambda-mode", bt_lambda_mode,
                 "cv_all | cv_target | fixed");
  bt->add_option("--lambda", bt_config.fixed_lambda,
                 "Penalty for --lambda-mode fixed");
  bt->add_option("--lambda-grid", bt_config.lambda_grid,
                 "Candidate lambdas (default: scale-aware)");
  bt->add_option("--folds", bt_config.cv_folds, "CV folds for lambda");
  bt->add_option("--ctau-repeats", bt_config.ctau_repeats,
                 "C_tau CV repeats");
  bt->add_option("--seed", bt_config.seed, "Random seed");
  bt->add_option("--k", bt_config.fixed_num_factors,
                 "Factors per sector (0: estimate at the first node)");
  bt->add_option("--kmax", bt_config.factor_kmax,
                 "Upper bound for factor estimation");
  bt->add_option("--out", bt_out, "Output report JSON")->required();
  bt->add_option("--csv-out", bt_csv, "Per-sector summary CSV");

  try {
    app.parse(argc, argv);
    if (est->parsed())
      return cmd_estimate(est_in, est_k, est_kmax, est_lambda, est_max_iter,
                          est_tol, est_demean, est_out);
    if (tune->parsed())
      return cmd_tune(tune_in, tune_k, tune_kmax, tune_lambda_grid,
                      tune_folds, tune_seed, tune_ctau_grid,
                      tune_ctau_repeats, tune_target, tune_contiguous,
                      tune_out);
    if (sim->parsed())
      return cmd_simulate(sim_scenario, sim_reps, sim_seed, sim_p,
                          sim_sectors, sim_t_train, sim_t_test, sim_ctau,
                          sim_folds, sim_strategies, sim_threads, sim_out,
                          sim_fig);
    if (bt->parsed()) {
      if (bt_lambda_mode == "cv_target" && bt_config.target_sector.empty())
        throw std::runtime_error("--lambda-mode cv_target needs --target");
      return cmd_backtest(bt_in, bt_strategies, bt_config, bt_lambda_mode,
                          bt_out, bt_csv);
    }
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const std::invalid_argument& e) {
    std::cerr << "error [validation]: " << e.what() << "\n";
    return 2;
  } catch (const std::runtime_error& e) {
    std::cerr << "error [runtime]: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}

}  // namespace ppfm
