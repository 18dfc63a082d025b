#include "ppfm/io_json.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <stdexcept>

namespace ppfm {

using nlohmann::json;

json matrix_to_json(const Eigen::MatrixXd& m) {
  json data = json::array();
  for (Eigen::Index i = 0; i < m.rows(); ++i)
    for (Eigen::Index j = 0; j < m.cols(); ++j) data.push_back(m(i, j));
  return json{{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

Eigen::MatrixXd matrix_from_json(const json& j) {
  const Eigen::Index rows = j.at("rows"), cols = j.at("cols");
  const auto& data = j.at("data");
  if (static_cast<Eigen::Index>(data.size()) != rows * cols)
    throw std::runtime_error("matrix json: data length mismatch");
  Eigen::MatrixXd m(rows, cols);
  std::size_t k = 0;
  for (Eigen::Index i = 0; i < rows; ++i)
    for (Eigen::Index jj = 0; jj < cols; ++jj) m(i, jj) = data[k++];
  return m;
}

json to_json(const FactorFit& fit) {
  return json{{"sector", fit.sector_label},
              {"num_factors", fit.num_factors},
              {"loadings", matrix_to_json(fit.loadings)},
              {"factors", matrix_to_json(fit.factors)},
              {"projection", matrix_to_json(fit.projection)},
              {"residuals", matrix_to_json(fit.residuals)}};
}

FactorFit factor_fit_from_json(const json& j) {
  FactorFit fit;
  fit.sector_label = j.at("sector");
  fit.num_factors = j.at("num_factors");
  fit.loadings = matrix_from_json(j.at("loadings"));
  fit.factors = matrix_from_json(j.at("factors"));
  fit.projection = matrix_from_json(j.at("projection"));
  fit.residuals = matrix_from_json(j.at("residuals"));
  return fit;
}

json to_json(const MultiFit& fit) {
  json fits = json::array();
  for (const auto& f : fit.fits) fits.push_back(to_json(f));
  return json{{"lambda", fit.lambda},
              {"iterations", fit.iterations},
              {"converged", fit.converged},
              {"loss_trace", fit.loss_trace},
              {"fits", fits}};
}

MultiFit multi_fit_from_json(const json& j) {
  MultiFit fit;
  fit.lambda = j.at("lambda");
  fit.iterations = j.at("iterations");
  fit.converged = j.at("converged");
  fit.loss_trace = j.at("loss_trace").get<std::vector<double>>();
  for (const auto& f : j.at("fits")) fit.fits.push_back(factor_fit_from_json(f));
  return fit;
}

json to_json(const SparseCovariance& cov) {
  return json{{"c_tau", cov.c_tau},
              {"rule", cov.rule == ThresholdRule::Soft ? "soft" : "hard"},
              {"nonzeros", cov.nonzeros},
              {"positive_definite", cov.positive_definite},
              {"matrix", matrix_to_json(cov.matrix)}};
}

namespace {

json optional_to_json(const std::optional<double>& v) {
  return v ? json(*v) : json(nullptr);
}

json nan_aware(double v) { return std::isnan(v) ? json(nullptr) : json(v); }

}  // namespace

json to_json(const StrategyTrack& track) {
  json returns = json::array();
  for (double r : track.returns) returns.push_back(nan_aware(r));
  json rebalances = json::array();
  for (const auto& rec : track.rebalances) {
    json weights = json::array();
    for (Eigen::Index i = 0; i < rec.weights.size(); ++i)
      weights.push_back(rec.weights(i));
    rebalances.push_back(json{{"date", rec.date},
                              {"assets", rec.assets},
                              {"weights", weights},
                              {"lambda", rec.lambda},
                              {"c_tau", rec.c_tau}});
  }
  return json{{"strategy", strategy_name(track.strategy)},
              {"sector", track.sector},
              {"realized_sd", track.realized_sd},
              {"mean_return", track.mean_return},
              {"cumulative_return", track.cumulative_return},
              {"simple_return", track.simple_return},
              {"sharpe", optional_to_json(track.sharpe)},
              {"skipped_periods", track.skipped_periods},
              {"missing_return_days", track.missing_return_days},
              {"returns", returns},
              {"rebalances", rebalances}};
}

json to_json(const BacktestReport& report) {
  json sectors = json::array();
  for (const auto& t : report.sectors) sectors.push_back(to_json(t));
  json aggregated = json::array();
  for (const auto& t : report.aggregated) aggregated.push_back(to_json(t));
  return json{{"dates", report.dates},
              {"sectors", sectors},
              {"aggregated", aggregated}};
}

json to_json(const LambdaCVResult& r) {
  return json{{"grid", r.grid},
              {"avg_risk", r.avg_risk},
              {"chosen", r.chosen},
              {"per_sector_risk", matrix_to_json(r.per_sector_risk)}};
}

json to_json(const CtauCVResult& r) {
  return json{{"grid", r.grid},
              {"avg_frobenius_loss", r.avg_frobenius_loss},
              {"chosen", r.chosen},
              {"c_min", r.c_min}};
}

void write_json(const std::string& path, const json& j) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write '" + path + "'");
  out << j.dump(2) << "\n";
}

json read_json(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  return json::parse(in);
}

std::string file_hash(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  std::uint64_t h = 0xcbf29ce484222325ull;
  char c;
  while (in.get(c)) {
    h ^= static_cast<unsigned char>(c);
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(h));
  return buf;
}

std::string format_double(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

}  // namespace ppfm
