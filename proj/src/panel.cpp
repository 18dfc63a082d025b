#include "ppfm/panel.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace ppfm {

namespace {

std::string trim(const std::string& s) {
  auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cell;
  std::stringstream ss(line);
  while (std::getline(ss, cell, ',')) out.push_back(trim(cell));
  if (!line.empty() && line.back() == ',') out.push_back("");
  return out;
}

bool is_missing_token(const std::string& s) {
  return s.empty() || s == "NA" || s == "NaN" || s == "nan";
}

double parse_cell(const std::string& s, std::size_t row, std::size_t col) {
  if (is_missing_token(s)) return std::numeric_limits<double>::quiet_NaN();
  std::size_t pos = 0;
  double v;
  try {
    v = std::stod(s, &pos);
  } catch (const std::exception&) {
    throw std::runtime_error("parse error at row " + std::to_string(row) +
                             ", column " + std::to_string(col) +
                             ": cannot parse '" + s + "'");
  }
  if (pos != s.size())
    throw std::runtime_error("parse error at row " + std::to_string(row) +
                             ", column " + std::to_string(col) +
                             ": trailing characters in '" + s + "'");
  return v;
}

void check_no_duplicates(const std::vector<std::string>& ids,
                         const char* what) {
  std::set<std::string> seen;
  for (const auto& id : ids)
    if (!seen.insert(id).second)
      throw std::invalid_argument(std::string("duplicate ") + what + " '" +
                                  id + "'");
}

}  // namespace

bool ReturnPanel::has_missing() const { return values.hasNaN(); }

void ReturnPanel::validate() const {
  if (values.rows() != static_cast<Eigen::Index>(assets.size()))
    throw std::invalid_argument("panel row count does not match asset list");
  if (values.cols() != static_cast<Eigen::Index>(times.size()))
    throw std::invalid_argument("panel column count does not match time list");
  check_no_duplicates(assets, "asset id");
  check_no_duplicates(times, "timestamp");
  for (std::size_t t = 1; t < times.size(); ++t)
    if (!(times[t - 1] < times[t]))
      throw std::invalid_argument("timestamps not strictly increasing at '" +
                                  times[t] + "'");
  for (Eigen::Index i = 0; i < values.rows(); ++i)
    for (Eigen::Index j = 0; j < values.cols(); ++j)
      if (std::isinf(values(i, j)))
        throw std::invalid_argument("infinite entry at (" + std::to_string(i) +
                                    ", " + std::to_string(j) + ")");
}

ReturnPanel load_panel(const std::string& path, bool transposed) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");

  std::vector<std::vector<std::string>> rows;
  std::string line;
  while (std::getline(in, line)) {
    if (trim(line).empty()) continue;
    rows.push_back(split_csv_line(line));
  }
  if (rows.size() < 2)
    throw std::runtime_error("'" + path + "': need a header row and data");

  const auto& header = rows.front();
  if (header.size() < 2)
    throw std::runtime_error("'" + path + "': header needs at least 2 cells");

  std::vector<std::string> row_ids;
  Eigen::MatrixXd raw(rows.size() - 1, header.size() - 1);
  for (std::size_t r = 1; r < rows.size(); ++r) {
    if (rows[r].size() != header.size())
      throw std::runtime_error("parse error at row " + std::to_string(r) +
                               ": expected " + std::to_string(header.size()) +
                               " cells, got " + std::to_string(rows[r].size()));
    row_ids.push_back(rows[r][0]);
    for (std::size_t c = 1; c < rows[r].size(); ++c)
      raw(static_cast<Eigen::Index>(r - 1), static_cast<Eigen::Index>(c - 1)) =
          parse_cell(rows[r][c], r, c);
  }
  std::vector<std::string> col_ids(header.begin() + 1, header.end());

  ReturnPanel panel;
  if (!transposed) {
    panel.assets = std::move(row_ids);
    panel.times = std::move(col_ids);
    panel.values = std::move(raw);
  } else {
    panel.assets = std::move(col_ids);
    panel.times = std::move(row_ids);
    panel.values = raw.transpose();
  }
  panel.validate();
  return panel;
}

SectorMap load_sector_map(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  SectorMap map;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != 2)
      throw std::runtime_error("sector map row " + std::to_string(row) +
                               ": expected 2 cells");
    if (row == 1 && (cells[0] == "asset" || cells[0] == "id")) continue;
    if (!map.sector_of.emplace(cells[0], cells[1]).second)
      throw std::runtime_error("sector map row " + std::to_string(row) +
                               ": duplicate asset '" + cells[0] + "'");
  }
  return map;
}

RiskFreeSeries load_risk_free(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open '" + path + "'");
  RiskFreeSeries rf;
  std::string line;
  std::size_t row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) continue;
    auto cells = split_csv_line(line);
    if (cells.size() != 2)
      throw std::runtime_error("risk-free file row " + std::to_string(row) +
                               ": expected 2 cells");
    if (row == 1 && (cells[0] == "date" || cells[0] == "time")) continue;
    rf[cells[0]] = parse_cell(cells[1], row, 2);
  }
  return rf;
}

ReturnPanel to_excess(const ReturnPanel& panel, const RiskFreeSeries& rf) {
  std::vector<std::string> uncovered;
  for (const auto& t : panel.times)
    if (!rf.count(t)) uncovered.push_back(t);
  if (!uncovered.empty()) {
    std::string msg = "risk-free series missing dates:";
    for (const auto& t : uncovered) msg += " " + t;
    throw std::invalid_argument(msg);
  }
  ReturnPanel out = panel;
  for (Eigen::Index t = 0; t < out.num_periods(); ++t)
    out.values.col(t).array() -= rf.at(out.times[t]);
  return out;
}

SectorGroups group_by_sector(const ReturnPanel& panel, const SectorMap& map,
                             int min_assets) {
  panel.validate();
  std::map<std::string, std::vector<Eigen::Index>> by_sector;
  SectorGroups out;
  for (Eigen::Index i = 0; i < panel.num_assets(); ++i) {
    auto it = map.sector_of.find(panel.assets[i]);
    if (it == map.sector_of.end()) {
      ++out.unmapped_dropped;
      continue;
    }
    by_sector[it->second].push_back(i);
  }
  for (const auto& [code, rows] : by_sector) {
    if (static_cast<int>(rows.size()) < min_assets) {
      ++out.small_sectors_dropped;
      continue;
    }
    ReturnPanel sub;
    sub.times = panel.times;
    sub.sector_label = code;
    sub.values.resize(static_cast<Eigen::Index>(rows.size()),
                      panel.num_periods());
    for (std::size_t k = 0; k < rows.size(); ++k) {
      sub.assets.push_back(panel.assets[rows[k]]);
      sub.values.row(static_cast<Eigen::Index>(k)) = panel.values.row(rows[k]);
    }
    out.panels.push_back(std::move(sub));
  }
  return out;
}

ReturnPanel complete_case_window(const ReturnPanel& panel, Eigen::Index start,
                                 Eigen::Index length) {
  if (start < 0 || length < 1 || start + length > panel.num_periods())
    throw std::invalid_argument("window [" + std::to_string(start) + ", " +
                                std::to_string(start + length) +
                                ") exceeds panel range");
  std::vector<Eigen::Index> keep;
  for (Eigen::Index i = 0; i < panel.num_assets(); ++i)
    if (!panel.values.row(i).segment(start, length).hasNaN()) keep.push_back(i);

  ReturnPanel out;
  out.sector_label = panel.sector_label;
  out.times.assign(panel.times.begin() + start,
                   panel.times.begin() + start + length);
  out.values.resize(static_cast<Eigen::Index>(keep.size()), length);
  for (std::size_t k = 0; k < keep.size(); ++k) {
    out.assets.push_back(panel.assets[keep[k]]);
    out.values.row(static_cast<Eigen::Index>(k)) =
        panel.values.row(keep[k]).segment(start, length);
  }
  return out;
}

double equal_weight_correlation(const ReturnPanel& a, const ReturnPanel& b) {
  if (a.times != b.times)
    throw std::invalid_argument("panels do not share the same times");
  if (a.has_missing() || b.has_missing())
    throw std::invalid_argument("panels must be complete");
  Eigen::VectorXd x = a.values.colwise().mean();
  Eigen::VectorXd y = b.values.colwise().mean();
  const double n = static_cast<double>(x.size());
  Eigen::VectorXd xc = x.array() - x.mean();
  Eigen::VectorXd yc = y.array() - y.mean();
  const double sx = xc.squaredNorm();
  const double sy = yc.squaredNorm();
  if (sx <= 0.0 || sy <= 0.0)
    throw std::invalid_argument("zero variance: correlation undefined");
  (void)n;
  return xc.dot(yc) / std::sqrt(sx * sy);
}

}  // namespace ppfm
