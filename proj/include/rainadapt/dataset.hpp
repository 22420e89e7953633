#pragma once

// Weather record schema, validation, standardization and splitting.
// Every other module consumes the Dataset produced here.

#include <array>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <string>
#include <utility>
#include <vector>

#include "rainadapt/common.hpp"

namespace rainadapt {

// One day of one site. Units: temperatures degC, qv2m g/kg, rh2m percent,
// ps kPa, wind m/s, wd10m degrees [0,360), prectot mm/day (the target).
struct WeatherRecord {
  std::string site_id;
  Date date;
  double t2m = 0;
  double t2mdew = 0;
  double t2mwet = 0;
  double ts = 0;
  double t2m_range = 0;
  double t2m_max = 0;
  double t2m_min = 0;
  double qv2m = 0;
  double rh2m = 0;
  double ps = 0;
  double ws10m = 0;
  double ws10m_max = 0;
  double ws10m_min = 0;
  double ws10m_range = 0;
  double wd10m = 0;
  double prectot = 0;
};

// Fixed feature column order: the cache CSV order minus site_id, date and
// the PRECTOTCORR target.
inline constexpr std::array<const char*, 15> kFeatureNames = {
    "T2M",   "T2MDEW",    "T2MWET",    "TS",        "T2M_RANGE",
    "T2M_MAX", "T2M_MIN", "QV2M",      "RH2M",      "PS",
    "WS10M", "WS10M_MAX", "WS10M_MIN", "WS10M_RANGE", "WD10M"};

inline constexpr const char* kTargetName = "PRECTOTCORR";
inline constexpr std::size_t kFeatureDim = kFeatureNames.size();

inline std::array<double, kFeatureDim> feature_row(const WeatherRecord& r) {
  return {r.t2m,   r.t2mdew,    r.t2mwet,    r.ts,          r.t2m_range,
          r.t2m_max, r.t2m_min, r.qv2m,      r.rh2m,        r.ps,
          r.ws10m, r.ws10m_max, r.ws10m_min, r.ws10m_range, r.wd10m};
}

struct Provenance {
  std::string site_id;
  Date date;

  bool operator==(const Provenance&) const = default;
  std::string key() const { return site_id + "|" + to_iso(date); }
};

// Feature matrix + target vector + row provenance. Row counts always agree.
class Dataset {
 public:
  Dataset() = default;
  Dataset(Matrix features, std::vector<double> targets,
          std::vector<Provenance> provenance)
      : features_(std::move(features)),
        targets_(std::move(targets)),
        provenance_(std::move(provenance)) {
    if (features_.rows() != targets_.size() ||
        features_.rows() != provenance_.size()) {
      throw DimensionMismatch("dataset row counts disagree");
    }
  }

  std::size_t n() const { return targets_.size(); }
  std::size_t feature_dim() const { return features_.cols(); }
  const Matrix& features() const { return features_; }
  const std::vector<double>& targets() const { return targets_; }
  const std::vector<Provenance>& provenance() const { return provenance_; }

  Dataset select(std::span<const std::size_t> rows) const {
    Matrix f(rows.size(), features_.cols());
    std::vector<double> t(rows.size());
    std::vector<Provenance> p(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) {
      const std::size_t r = rows[i];
      for (std::size_t c = 0; c < features_.cols(); ++c)
        f(i, c) = features_(r, c);
      t[i] = targets_[r];
      p[i] = provenance_[r];
    }
    return Dataset(std::move(f), std::move(t), std::move(p));
  }

 private:
  Matrix features_;
  std::vector<double> targets_;
  std::vector<Provenance> provenance_;
};

// ---------------------------------------------------------------------------
// validation
// ---------------------------------------------------------------------------

struct Rejection {
  std::size_t index;   // position in the input list
  std::string reason;  // first violated invariant
};

struct ValidationResult {
  Dataset dataset;
  std::vector<Rejection> rejected;
};

namespace detail {

// The upstream service marks missing data with -999.
inline bool is_fill_value(double v) { return v <= -998.999; }

// Returns the first violated invariant, or empty when the record is clean.
inline std::string record_violation(const WeatherRecord& r) {
  struct Field {
    const char* name;
    double value;
  };
  const Field fields[] = {
      {"t2m", r.t2m},           {"t2mdew", r.t2mdew},
      {"t2mwet", r.t2mwet},     {"ts", r.ts},
      {"t2m_range", r.t2m_range}, {"t2m_max", r.t2m_max},
      {"t2m_min", r.t2m_min},   {"qv2m", r.qv2m},
      {"rh2m", r.rh2m},         {"ps", r.ps},
      {"ws10m", r.ws10m},       {"ws10m_max", r.ws10m_max},
      {"ws10m_min", r.ws10m_min}, {"ws10m_range", r.ws10m_range},
      {"wd10m", r.wd10m},       {"prectot", r.prectot}};
  for (const auto& f : fields) {
    if (!std::isfinite(f.value))
      return std::string(f.name) + " not finite";
    if (is_fill_value(f.value))
      return std::string(f.name) + " has -999 fill value";
  }
  if (r.rh2m < 0.0 || r.rh2m > 100.0) return "rh2m out of range";
  if (r.prectot < 0.0) return "prectot negative";
  if (!(r.ws10m_min <= r.ws10m && r.ws10m <= r.ws10m_max))
    return "ws10m outside [ws10m_min, ws10m_max]";
  if (!(r.t2m_min <= r.t2m && r.t2m <= r.t2m_max))
    return "t2m outside [t2m_min, t2m_max]";
  return {};
}

}  // namespace detail

// Keeps only records passing every WeatherRecord invariant, in input order.
inline ValidationResult validate_records(
    std::span<const WeatherRecord> raw) {
  if (raw.empty()) throw EmptyInput("validate_records: empty input");

  std::vector<std::size_t> keep;
  std::vector<Rejection> rejected;
  for (std::size_t i = 0; i < raw.size(); ++i) {
    std::string reason = detail::record_violation(raw[i]);
    if (reason.empty())
      keep.push_back(i);
    else
      rejected.push_back({i, std::move(reason)});
  }
  if (keep.empty())
    throw EmptyAfterValidation("validate_records: no record survived");

  Matrix f(keep.size(), kFeatureDim);
  std::vector<double> t(keep.size());
  std::vector<Provenance> p(keep.size());
  for (std::size_t i = 0; i < keep.size(); ++i) {
    const WeatherRecord& r = raw[keep[i]];
    const auto row = feature_row(r);
    for (std::size_t c = 0; c < kFeatureDim; ++c) f(i, c) = row[c];
    t[i] = r.prectot;
    p[i] = {r.site_id, r.date};
  }
  return {Dataset(std::move(f), std::move(t), std::move(p)),
          std::move(rejected)};
}

// ---------------------------------------------------------------------------
// standardization
// ---------------------------------------------------------------------------

// Per-column mean and population standard deviation.
struct Scaler {
  std::vector<double> mean;
  std::vector<double> stddev;

  std::size_t dim() const { return mean.size(); }
};

inline Scaler fit_scaler(const Dataset& ds) {
  const std::size_t n = ds.n();
  const std::size_t d = ds.feature_dim();
  if (n < 2) throw InsufficientData("fit_scaler: need at least 2 rows");

  Scaler sc;
  sc.mean.resize(d);
  sc.stddev.resize(d);
  for (std::size_t c = 0; c < d; ++c) {
    double sum = 0.0;
    for (std::size_t i = 0; i < n; ++i) sum += ds.features()(i, c);
    const double mean = sum / static_cast<double>(n);
    double sq = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double dlt = ds.features()(i, c) - mean;
      sq += dlt * dlt;
    }
    const double stddev = std::sqrt(sq / static_cast<double>(n));
    if (stddev < 1e-12)
      throw DegenerateColumn(c, "fit_scaler: column " + std::to_string(c) +
                                    " (" + kFeatureNames[c] +
                                    ") has zero variance");
    sc.mean[c] = mean;
    sc.stddev[c] = stddev;
  }
  return sc;
}

// (x - mean) / stddev per feature column; targets untouched.
inline Dataset apply_scaler(const Scaler& sc, const Dataset& ds) {
  if (sc.dim() != ds.feature_dim())
    throw DimensionMismatch("apply_scaler: scaler dim " +
                            std::to_string(sc.dim()) + " vs dataset dim " +
                            std::to_string(ds.feature_dim()));
  Matrix f(ds.n(), ds.feature_dim());
  for (std::size_t i = 0; i < ds.n(); ++i)
    for (std::size_t c = 0; c < ds.feature_dim(); ++c)
      f(i, c) = (ds.features()(i, c) - sc.mean[c]) / sc.stddev[c];
  return Dataset(std::move(f), ds.targets(), ds.provenance());
}

inline Dataset invert_scaler(const Scaler& sc, const Dataset& ds) {
  if (sc.dim() != ds.feature_dim())
    throw DimensionMismatch("invert_scaler: dimension mismatch");
  Matrix f(ds.n(), ds.feature_dim());
  for (std::size_t i = 0; i < ds.n(); ++i)
    for (std::size_t c = 0; c < ds.feature_dim(); ++c)
      f(i, c) = ds.features()(i, c) * sc.stddev[c] + sc.mean[c];
  return Dataset(std::move(f), ds.targets(), ds.provenance());
}

// ---------------------------------------------------------------------------
// splitting
// ---------------------------------------------------------------------------

enum class SplitMode { chronological, shuffled };

struct SplitSpec {
  double ratio = 0.8;  // fraction in the first part, (0,1)
  std::uint64_t seed = 0;
  SplitMode mode = SplitMode::chronological;
};

// First part holds floor(ratio*N) rows. Chronological sorts by (date, site)
// and keeps the earliest rows first; shuffled permutes by the seed.
inline std::pair<Dataset, Dataset> split_dataset(const Dataset& ds,
                                                 const SplitSpec& spec) {
  if (!(spec.ratio > 0.0 && spec.ratio < 1.0))
    throw ConfigError("split ratio must lie strictly between 0 and 1");
  const std::size_t n = ds.n();
  if (n < 2) throw InsufficientData("split_dataset: need at least 2 rows");

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  if (spec.mode == SplitMode::chronological) {
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) {
                       const auto& pa = ds.provenance()[a];
                       const auto& pb = ds.provenance()[b];
                       if (pa.date != pb.date) return pa.date < pb.date;
                       return pa.site_id < pb.site_id;
                     });
  } else {
    std::mt19937_64 rng(spec.seed);
    std::shuffle(order.begin(), order.end(), rng);
  }

  const std::size_t k = static_cast<std::size_t>(
      std::floor(spec.ratio * static_cast<double>(n)));
  if (k == 0 || k == n)
    throw EmptyPartition("split_dataset: ratio " + std::to_string(spec.ratio) +
                         " leaves an empty part for N=" + std::to_string(n));

  std::span<const std::size_t> all(order);
  return {ds.select(all.subspan(0, k)), ds.select(all.subspan(k))};
}

}  // namespace rainadapt
