#pragma once

#include <Eigen/Core>

#include <map>
#include <string>
#include <vector>

namespace ppfm {

/// A p x T panel of per-period asset returns. Missing entries are stored as
/// NaN; a "complete" panel has none. Rows follow `assets`, columns follow
/// `times` (strictly increasing ISO-8601 dates).
struct ReturnPanel {
  std::vector<std::string> assets;
  std::vector<std::string> times;
  Eigen::MatrixXd values;
  std::string sector_label;

  Eigen::Index num_assets() const { return values.rows(); }
  Eigen::Index num_periods() const { return values.cols(); }

  bool has_missing() const;

  /// Throws std::invalid_argument on any invariant violation (dimension
  /// mismatch, duplicate ids, non-increasing times, infinite entries).
  void validate() const;
};

/// Asset identifier -> sector code (e.g. first two SIC digits).
struct SectorMap {
  std::map<std::string, std::string> sector_of;
};

using RiskFreeSeries = std::map<std::string, double>;

/// Parses a wide CSV: first column asset id, header row dates, cells decimal
/// returns. Empty cells and "NA" become missing. With `transposed`, rows are
/// dates and columns are assets.
ReturnPanel load_panel(const std::string& path, bool transposed = false);

/// Two-column CSV: asset id, sector code.
SectorMap load_sector_map(const std::string& path);

/// Two-column CSV: date, per-period risk-free rate (decimal).
RiskFreeSeries load_risk_free(const std::string& path);

/// Subtracts the same-date risk-free rate from every entry; missing entries
/// stay missing. Throws if any panel date is absent from `rf`.
ReturnPanel to_excess(const ReturnPanel& panel, const RiskFreeSeries& rf);

struct SectorGroups {
  std::vector<ReturnPanel> panels;  // one per retained sector, sorted by code
  int unmapped_dropped = 0;
  int small_sectors_dropped = 0;
};

/// Partitions a panel by sector code. Unmapped assets are dropped (counted),
/// and sectors with fewer than `min_assets` assets are excluded.
SectorGroups group_by_sector(const ReturnPanel& panel, const SectorMap& map,
                             int min_assets = 30);

/// Restricts [start, start+length) to assets with no missing entry inside the
/// window.
ReturnPanel complete_case_window(const ReturnPanel& panel, Eigen::Index start,
                                 Eigen::Index length);

/// Pearson correlation between the cross-sectional mean-return series of two
/// complete, time-aligned panels. Throws on zero variance.
double equal_weight_correlation(const ReturnPanel& a, const ReturnPanel& b);

}  // namespace ppfm
