#pragma once

// Evaluation metrics (MSE / MAE / MAPE with a dry-day exclusion threshold)
// and the rendering of comparison / improvement tables and their CSVs.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "rainadapt/common.hpp"

namespace rainadapt {

inline double mse(std::span<const double> pred, std::span<const double> truth) {
  if (pred.size() != truth.size()) throw DimensionMismatch("mse: length mismatch");
  if (pred.empty()) throw EmptyInput("mse: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double d = pred[i] - truth[i];
    s += d * d;
  }
  return s / static_cast<double>(pred.size());
}

inline double mae(std::span<const double> pred, std::span<const double> truth) {
  if (pred.size() != truth.size()) throw DimensionMismatch("mae: length mismatch");
  if (pred.empty()) throw EmptyInput("mae: empty input");
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i)
    s += std::fabs(pred[i] - truth[i]);
  return s / static_cast<double>(pred.size());
}

struct MapeResult {
  double percent = 0.0;
  std::size_t excluded = 0;  // samples with truth <= eps
};

// Mean of 100*|pred - truth|/truth over samples with truth > eps. Dry days
// would otherwise divide by (near) zero.
inline MapeResult mape(std::span<const double> pred,
                       std::span<const double> truth, double eps) {
  if (pred.size() != truth.size())
    throw DimensionMismatch("mape: length mismatch");
  double s = 0.0;
  std::size_t used = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (truth[i] > eps) {
      s += 100.0 * std::fabs(pred[i] - truth[i]) / truth[i];
      ++used;
    }
  }
  if (used == 0)
    throw AllExcluded("mape: every sample fell below the eps threshold");
  return {s / static_cast<double>(used), pred.size() - used};
}

struct EvalReport {
  std::string method;  // ADB, GRB, RFR, SR, DWOA, DWA
  std::string city;
  double mse = 0.0;
  double mae = 0.0;
  double mape = 0.0;
  std::size_t n_eval = 0;
  std::size_t n_excluded_zero = 0;
};

struct ImprovementRow {
  std::string city;
  double before_mape = 0.0;
  double after_mape = 0.0;
  double point_drop = 0.0;     // percentage points
  double relative_drop = 0.0;  // percent of the before value
};

inline ImprovementRow improvement(const std::string& city, double before,
                                  double after) {
  if (!(before > 0.0))
    throw DataError("improvement: before-adaptation MAPE must be positive");
  ImprovementRow row;
  row.city = city;
  row.before_mape = before;
  row.after_mape = after;
  row.point_drop = before - after;
  row.relative_drop = 100.0 * row.point_drop / before;
  return row;
}

// Canonical rendering order; unknown methods render after these, in
// first appearance order.
inline const std::vector<std::string>& method_order() {
  static const std::vector<std::string> order = {"ADB", "GRB",  "RFR",
                                                 "SR",  "DWOA", "DWA"};
  return order;
}

namespace detail {

inline std::string format_fixed4(double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.4f", v);
  return buf;
}

inline int method_rank(const std::string& method) {
  const auto& order = method_order();
  for (std::size_t i = 0; i < order.size(); ++i)
    if (order[i] == method) return static_cast<int>(i);
  return static_cast<int>(order.size());
}

}  // namespace detail

struct ComparisonOutput {
  std::string csv;         // city,method,mape
  std::string text_table;  // aligned, human-readable
};

inline ComparisonOutput render_comparison(
    const std::vector<EvalReport>& reports) {
  if (reports.empty()) throw EmptyInput("render_comparison: no reports");

  // cities in first-appearance order, methods in legend order
  std::vector<std::string> cities;
  for (const auto& r : reports)
    if (std::find(cities.begin(), cities.end(), r.city) == cities.end())
      cities.push_back(r.city);

  std::vector<const EvalReport*> ordered;
  for (const auto& r : reports) ordered.push_back(&r);
  std::stable_sort(ordered.begin(), ordered.end(),
                   [&](const EvalReport* a, const EvalReport* b) {
                     const auto ca = std::find(cities.begin(), cities.end(),
                                               a->city) -
                                     cities.begin();
                     const auto cb = std::find(cities.begin(), cities.end(),
                                               b->city) -
                                     cities.begin();
                     if (ca != cb) return ca < cb;
                     return detail::method_rank(a->method) <
                            detail::method_rank(b->method);
                   });

  std::ostringstream csv;
  csv << "city,method,mape\n";
  for (const auto* r : ordered)
    csv << r->city << ',' << r->method << ','
        << detail::format_fixed4(r->mape) << '\n';

  std::size_t city_width = 4;
  for (const auto& c : cities) city_width = std::max(city_width, c.size());

  std::ostringstream table;
  table << "MAPE (%) by method and city\n";
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-*s %-6s %12s %12s %12s %8s %10s\n",
                static_cast<int>(city_width), "city", "method", "mape",
                "mae", "mse", "n", "excluded");
  table << buf;
  for (const auto* r : ordered) {
    std::snprintf(buf, sizeof(buf), "%-*s %-6s %12.4f %12.4f %12.4f %8zu %10zu\n",
                  static_cast<int>(city_width), r->city.c_str(),
                  r->method.c_str(), r->mape, r->mae, r->mse, r->n_eval,
                  r->n_excluded_zero);
    table << buf;
  }
  return {csv.str(), table.str()};
}

inline std::string render_improvement_csv(
    const std::vector<ImprovementRow>& rows) {
  std::ostringstream csv;
  csv << "city,before_mape,after_mape,point_drop,relative_drop\n";
  for (const auto& r : rows)
    csv << r.city << ',' << detail::format_fixed4(r.before_mape) << ','
        << detail::format_fixed4(r.after_mape) << ','
        << detail::format_fixed4(r.point_drop) << ','
        << detail::format_fixed4(r.relative_drop) << '\n';
  return csv.str();
}

inline std::string render_improvement_table(
    const std::vector<ImprovementRow>& rows) {
  std::size_t city_width = 4;
  for (const auto& r : rows) city_width = std::max(city_width, r.city.size());
  std::ostringstream table;
  table << "MAPE before/after adaptation\n";
  char buf[256];
  std::snprintf(buf, sizeof(buf), "%-*s %14s %14s %12s %14s\n",
                static_cast<int>(city_width), "city", "before (%)",
                "after (%)", "drop (pp)", "drop (rel %)");
  table << buf;
  for (const auto& r : rows) {
    std::snprintf(buf, sizeof(buf), "%-*s %14.4f %14.4f %12.4f %14.4f\n",
                  static_cast<int>(city_width), r.city.c_str(), r.before_mape,
                  r.after_mape, r.point_drop, r.relative_drop);
    table << buf;
  }
  return table.str();
}

}  // namespace rainadapt
