#pragma once

// Shared plumbing: error hierarchy, calendar dates, a dense row-major
// matrix, and seed derivation for independent RNG streams.

#include <algorithm>
#include <cmath>
#include <compare>
#include <cstdint>
#include <cstdio>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace rainadapt {

// ---------------------------------------------------------------------------
// errors
//
// Three families, matching the CLI exit codes: UsageError -> 1,
// DataError -> 2, NumericError -> 3.
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class UsageError : public Error {
 public:
  using Error::Error;
};

class DataError : public Error {
 public:
  using Error::Error;
};

class NumericError : public Error {
 public:
  using Error::Error;
};

class ConfigError : public UsageError {
 public:
  using UsageError::UsageError;
};

class EmptyInput : public DataError {
 public:
  using DataError::DataError;
};

class EmptyAfterValidation : public DataError {
 public:
  using DataError::DataError;
};

class DimensionMismatch : public DataError {
 public:
  using DataError::DataError;
};

class EmptyPartition : public DataError {
 public:
  using DataError::DataError;
};

class InsufficientData : public DataError {
 public:
  using DataError::DataError;
};

class NetworkError : public DataError {
 public:
  using DataError::DataError;
};

class ServiceError : public DataError {
 public:
  ServiceError(int status, const std::string& what)
      : DataError(what), status_(status) {}
  int status() const { return status_; }

 private:
  int status_;
};

class MalformedResponse : public DataError {
 public:
  using DataError::DataError;
};

class IoError : public DataError {
 public:
  using DataError::DataError;
};

class ParseError : public DataError {
 public:
  ParseError(std::size_t line, const std::string& what)
      : DataError("line " + std::to_string(line) + ": " + what), line_(line) {}
  std::size_t line() const { return line_; }

 private:
  std::size_t line_;
};

class AllExcluded : public DataError {
 public:
  using DataError::DataError;
};

class MissingResults : public DataError {
 public:
  using DataError::DataError;
};

class DegenerateColumn : public NumericError {
 public:
  DegenerateColumn(std::size_t column, const std::string& what)
      : NumericError(what), column_(column) {}
  std::size_t column() const { return column_; }

 private:
  std::size_t column_;
};

class NonFiniteGradient : public NumericError {
 public:
  using NumericError::NumericError;
};

class SingularMetaProblem : public NumericError {
 public:
  using NumericError::NumericError;
};

// ---------------------------------------------------------------------------
// calendar dates
// ---------------------------------------------------------------------------

struct Date {
  int year = 0;
  int month = 0;  // 1..12
  int day = 0;    // 1..31

  auto operator<=>(const Date&) const = default;
};

inline bool is_leap_year(int y) {
  return (y % 4 == 0 && y % 100 != 0) || y % 400 == 0;
}

inline int days_in_month(int y, int m) {
  static const int lengths[] = {31, 28, 31, 30, 31, 30, 31, 31, 30, 31, 30, 31};
  if (m == 2 && is_leap_year(y)) return 29;
  return lengths[m - 1];
}

inline bool valid_date(const Date& d) {
  return d.month >= 1 && d.month <= 12 && d.day >= 1 &&
         d.day <= days_in_month(d.year, d.month);
}

// days since 1970-01-01 (Howard Hinnant's civil-days algorithm)
inline std::int64_t days_from_civil(const Date& d) {
  int y = d.year - (d.month <= 2);
  const int era_base = y >= 0 ? y : y - 399;
  const std::int64_t era = era_base / 400;
  const unsigned yoe = static_cast<unsigned>(y - era * 400);
  const unsigned doy =
      (153u * static_cast<unsigned>(d.month + (d.month > 2 ? -3 : 9)) + 2) / 5 +
      static_cast<unsigned>(d.day) - 1;
  const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
  return era * 146097 + static_cast<std::int64_t>(doe) - 719468;
}

inline Date civil_from_days(std::int64_t z) {
  z += 719468;
  const std::int64_t era = (z >= 0 ? z : z - 146096) / 146097;
  const unsigned doe = static_cast<unsigned>(z - era * 146097);
  const unsigned yoe = (doe - doe / 1460 + doe / 36524 - doe / 146096) / 365;
  const std::int64_t y = static_cast<std::int64_t>(yoe) + era * 400;
  const unsigned doy = doe - (365 * yoe + yoe / 4 - yoe / 100);
  const unsigned mp = (5 * doy + 2) / 153;
  const unsigned d = doy - (153 * mp + 2) / 5 + 1;
  const unsigned m = mp + (mp < 10 ? 3 : -9);
  return Date{static_cast<int>(y + (m <= 2)), static_cast<int>(m),
              static_cast<int>(d)};
}

inline Date add_days(const Date& d, std::int64_t n) {
  return civil_from_days(days_from_civil(d) + n);
}

inline std::string to_iso(const Date& d) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d-%02d-%02d", d.year, d.month, d.day);
  return buf;
}

inline std::string to_compact(const Date& d) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%04d%02d%02d", d.year, d.month, d.day);
  return buf;
}

inline std::optional<Date> parse_iso_date(const std::string& s) {
  if (s.size() != 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i == 4 || i == 7) continue;
    if (s[i] < '0' || s[i] > '9') return std::nullopt;
  }
  Date d{std::stoi(s.substr(0, 4)), std::stoi(s.substr(5, 2)),
         std::stoi(s.substr(8, 2))};
  if (!valid_date(d)) return std::nullopt;
  return d;
}

inline std::optional<Date> parse_compact_date(const std::string& s) {
  if (s.size() != 8) return std::nullopt;
  for (char c : s)
    if (c < '0' || c > '9') return std::nullopt;
  Date d{std::stoi(s.substr(0, 4)), std::stoi(s.substr(4, 2)),
         std::stoi(s.substr(6, 2))};
  if (!valid_date(d)) return std::nullopt;
  return d;
}

// ---------------------------------------------------------------------------
// dense matrix (row-major doubles)
// ---------------------------------------------------------------------------

class Matrix {
 public:
  Matrix() = default;
  Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
      : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

  std::size_t rows() const { return rows_; }
  std::size_t cols() const { return cols_; }

  double& operator()(std::size_t i, std::size_t j) {
    return data_[i * cols_ + j];
  }
  double operator()(std::size_t i, std::size_t j) const {
    return data_[i * cols_ + j];
  }

  std::span<double> row(std::size_t i) {
    return {data_.data() + i * cols_, cols_};
  }
  std::span<const double> row(std::size_t i) const {
    return {data_.data() + i * cols_, cols_};
  }

  std::vector<double>& data() { return data_; }
  const std::vector<double>& data() const { return data_; }

  bool operator==(const Matrix& o) const = default;

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  std::vector<double> data_;
};

// ---------------------------------------------------------------------------
// seeded randomness
// ---------------------------------------------------------------------------

// splitmix64 step; derives independent stream seeds from a master seed so
// that consumers never share or race a generator.
inline std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t stream) {
  std::uint64_t z = seed + 0x9e3779b97f4a7c15ull * (stream + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
  return z ^ (z >> 31);
}

// ---------------------------------------------------------------------------
// small dense solve (Gaussian elimination, partial pivoting)
// ---------------------------------------------------------------------------

inline std::optional<std::vector<double>> solve_linear(Matrix a,
                                                       std::vector<double> b) {
  const std::size_t n = a.rows();
  if (a.cols() != n || b.size() != n) return std::nullopt;

  double scale = 0.0;
  for (double v : a.data()) scale = std::max(scale, std::fabs(v));
  const double tol = 1e-12 * std::max(1.0, scale);

  for (std::size_t col = 0; col < n; ++col) {
    std::size_t pivot = col;
    for (std::size_t r = col + 1; r < n; ++r)
      if (std::fabs(a(r, col)) > std::fabs(a(pivot, col))) pivot = r;
    if (std::fabs(a(pivot, col)) <= tol) return std::nullopt;
    if (pivot != col) {
      for (std::size_t c = 0; c < n; ++c) std::swap(a(pivot, c), a(col, c));
      std::swap(b[pivot], b[col]);
    }
    for (std::size_t r = col + 1; r < n; ++r) {
      const double f = a(r, col) / a(col, col);
      if (f == 0.0) continue;
      for (std::size_t c = col; c < n; ++c) a(r, c) -= f * a(col, c);
      b[r] -= f * b[col];
    }
  }

  std::vector<double> x(n, 0.0);
  for (std::size_t i = n; i-- > 0;) {
    double s = b[i];
    for (std::size_t j = i + 1; j < n; ++j) s -= a(i, j) * x[j];
    x[i] = s / a(i, i);
  }
  return x;
}

}  // namespace rainadapt
