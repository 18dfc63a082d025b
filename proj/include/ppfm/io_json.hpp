#pragma once

#include "ppfm/backtest.hpp"
#include "ppfm/covariance.hpp"
#include "ppfm/estimator.hpp"
#include "ppfm/simulation.hpp"
#include "ppfm/tuning.hpp"

#include <json.hpp>

#include <string>

namespace ppfm {

/// Matrices serialize as {"rows": r, "cols": c, "data": [row-major values]}.
nlohmann::json matrix_to_json(const Eigen::MatrixXd& m);
Eigen::MatrixXd matrix_from_json(const nlohmann::json& j);

nlohmann::json to_json(const FactorFit& fit);
FactorFit factor_fit_from_json(const nlohmann::json& j);

nlohmann::json to_json(const MultiFit& fit);
MultiFit multi_fit_from_json(const nlohmann::json& j);

nlohmann::json to_json(const SparseCovariance& cov);

nlohmann::json to_json(const StrategyTrack& track);
nlohmann::json to_json(const BacktestReport& report);

nlohmann::json to_json(const LambdaCVResult& r);
nlohmann::json to_json(const CtauCVResult& r);

void write_json(const std::string& path, const nlohmann::json& j);
nlohmann::json read_json(const std::string& path);

/// FNV-1a over file bytes, hex-encoded; used for output manifests.
std::string file_hash(const std::string& path);

/// Formats a double with enough digits to round-trip ("%.17g").
std::string format_double(double v);

}  // namespace ppfm
