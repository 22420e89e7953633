#pragma once

// NASA POWER daily-point client and the CSV cache it feeds. Fetching is
// injectable so everything below the HTTP layer is testable offline.

#include <charconv>
#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
#define CPPHTTPLIB_OPENSSL_SUPPORT
#endif
#include <httplib.h>
#include <json.hpp>

#include "rainadapt/common.hpp"
#include "rainadapt/dataset.hpp"

namespace rainadapt {

struct Site {
  std::string name;
  double latitude = 0.0;   // degrees, [-90, 90]
  double longitude = 0.0;  // degrees, [-180, 180]
};

inline void validate_site(const Site& s) {
  if (s.name.empty()) throw ConfigError("site name empty");
  if (s.latitude < -90.0 || s.latitude > 90.0)
    throw ConfigError("site " + s.name + ": latitude out of bounds");
  if (s.longitude < -180.0 || s.longitude > 180.0)
    throw ConfigError("site " + s.name + ": longitude out of bounds");
}

struct DateRange {
  Date start;
  Date end;  // inclusive
};

inline void validate_range(const DateRange& r) {
  if (!valid_date(r.start) || !valid_date(r.end) || r.end < r.start)
    throw ConfigError("invalid date range");
}

inline std::int64_t day_count(const DateRange& r) {
  return days_from_civil(r.end) - days_from_civil(r.start) + 1;
}

// ---------------------------------------------------------------------------
// request URL
// ---------------------------------------------------------------------------

inline constexpr const char* kPowerHost = "https://power.larc.nasa.gov";
inline constexpr const char* kPowerPath = "/api/temporal/daily/point";
inline constexpr const char* kPowerCommunity = "ag";

inline std::string power_parameter_list() {
  std::string out;
  for (const char* name : kFeatureNames) {
    out += name;
    out += ',';
  }
  out += kTargetName;
  return out;
}

inline std::string build_power_url(const Site& site, const DateRange& range) {
  validate_site(site);
  validate_range(range);
  char coord[32];
  std::string url = std::string(kPowerHost) + kPowerPath;
  url += "?parameters=" + power_parameter_list();
  url += "&community=";
  url += kPowerCommunity;
  std::snprintf(coord, sizeof(coord), "%.4f", site.latitude);
  url += "&latitude=" + std::string(coord);
  std::snprintf(coord, sizeof(coord), "%.4f", site.longitude);
  url += "&longitude=" + std::string(coord);
  url += "&start=" + to_compact(range.start);
  url += "&end=" + to_compact(range.end);
  url += "&format=json";
  return url;
}

// ---------------------------------------------------------------------------
// response parsing
// ---------------------------------------------------------------------------

// POWER returns {"properties": {"parameter": {NAME: {"YYYYMMDD": value}}}}.
// Fill values (-999) pass through; dataset validation rejects them later.
inline std::vector<WeatherRecord> parse_power_response(
    const std::string& body, const std::string& site_id) {
  nlohmann::json doc;
  try {
    doc = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    throw MalformedResponse(std::string("response is not JSON: ") + e.what());
  }

  const nlohmann::json* params = nullptr;
  if (doc.contains("properties") && doc["properties"].contains("parameter"))
    params = &doc["properties"]["parameter"];
  else if (doc.contains("parameter"))
    params = &doc["parameter"];
  else
    throw MalformedResponse("no parameter block in response");

  std::vector<std::string> names(kFeatureNames.begin(), kFeatureNames.end());
  names.push_back(kTargetName);

  // date -> (parameter name -> value); std::map keeps dates ascending
  std::map<std::string, std::map<std::string, double>> by_date;
  std::size_t expected = 0;
  for (const auto& name : names) {
    if (!params->contains(name) || !(*params)[name].is_object())
      throw MalformedResponse("parameter series missing: " + name);
    const auto& series = (*params)[name];
    if (expected == 0)
      expected = series.size();
    else if (series.size() != expected)
      throw MalformedResponse("parameter series lengths disagree at " + name);
    for (auto it = series.begin(); it != series.end(); ++it) {
      if (!it.value().is_number())
        throw MalformedResponse("non-numeric value in series " + name);
      by_date[it.key()][name] = it.value().get<double>();
    }
  }

  std::vector<WeatherRecord> out;
  out.reserve(by_date.size());
  for (const auto& [date_key, values] : by_date) {
    if (values.size() != names.size())
      throw MalformedResponse("date " + date_key +
                              " missing in some parameter series");
    auto date = parse_compact_date(date_key);
    if (!date) throw MalformedResponse("bad date key: " + date_key);
    WeatherRecord r;
    r.site_id = site_id;
    r.date = *date;
    r.t2m = values.at("T2M");
    r.t2mdew = values.at("T2MDEW");
    r.t2mwet = values.at("T2MWET");
    r.ts = values.at("TS");
    r.t2m_range = values.at("T2M_RANGE");
    r.t2m_max = values.at("T2M_MAX");
    r.t2m_min = values.at("T2M_MIN");
    r.qv2m = values.at("QV2M");
    r.rh2m = values.at("RH2M");
    r.ps = values.at("PS");
    r.ws10m = values.at("WS10M");
    r.ws10m_max = values.at("WS10M_MAX");
    r.ws10m_min = values.at("WS10M_MIN");
    r.ws10m_range = values.at("WS10M_RANGE");
    r.wd10m = values.at("WD10M");
    r.prectot = values.at(kTargetName);
    out.push_back(std::move(r));
  }
  return out;
}

// ---------------------------------------------------------------------------
// fetching
// ---------------------------------------------------------------------------

struct HttpResponse {
  int status = 0;
  std::string body;
};

// Throws NetworkError when no response could be obtained at all.
using HttpGet = std::function<HttpResponse(const std::string& url)>;

struct FetchOptions {
  int attempts = 3;
  std::chrono::milliseconds initial_backoff{250};
  HttpGet http;  // defaults to the real client
};

inline HttpResponse default_http_get(const std::string& url) {
  const std::string host_prefix(kPowerHost);
  if (url.rfind(host_prefix, 0) != 0)
    throw NetworkError("unexpected host in URL: " + url);
  httplib::Client client(host_prefix);
  client.set_connection_timeout(std::chrono::seconds(20));
  client.set_read_timeout(std::chrono::seconds(60));
  client.set_follow_location(true);
  auto result = client.Get(url.substr(host_prefix.size()));
  if (!result)
    throw NetworkError("request failed: " + httplib::to_string(result.error()));
  return {result->status, result->body};
}

inline std::vector<WeatherRecord> fetch_daily(const Site& site,
                                              const DateRange& range,
                                              const FetchOptions& opts = {}) {
  const std::string url = build_power_url(site, range);
  const HttpGet& get = opts.http ? opts.http : default_http_get;

  auto transient = [](int status) { return status >= 500 || status == 429; };

  std::string last_network_error;
  int last_status = 0;
  auto backoff = opts.initial_backoff;
  for (int attempt = 0; attempt < opts.attempts; ++attempt) {
    if (attempt > 0 && backoff.count() > 0) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
    HttpResponse resp;
    try {
      resp = get(url);
    } catch (const NetworkError& e) {
      last_network_error = e.what();
      last_status = 0;
      continue;
    }
    if (resp.status == 200) return parse_power_response(resp.body, site.name);
    if (!transient(resp.status))
      throw ServiceError(resp.status, "POWER request for " + site.name +
                                          " failed with status " +
                                          std::to_string(resp.status));
    last_status = resp.status;
  }
  if (last_status != 0)
    throw ServiceError(last_status,
                       "POWER request for " + site.name + " failed with status " +
                           std::to_string(last_status) + " after " +
                           std::to_string(opts.attempts) + " attempts");
  throw NetworkError("could not reach POWER service for " + site.name + ": " +
                     last_network_error);
}

// ---------------------------------------------------------------------------
// CSV cache
// ---------------------------------------------------------------------------

inline constexpr const char* kCacheHeader =
    "site_id,date,T2M,T2MDEW,T2MWET,TS,T2M_RANGE,T2M_MAX,T2M_MIN,QV2M,RH2M,"
    "PS,WS10M,WS10M_MAX,WS10M_MIN,WS10M_RANGE,WD10M,PRECTOTCORR";

namespace detail {

// Shortest plain-decimal form that parses back to the same double, so
// caches restore exactly (stronger than the documented 6-significant-digit
// guarantee). Fixed format: no scientific notation in the files.
inline std::string format_number(double v) {
  char buf[1120];  // fixed notation of a denormal needs ~1080 characters
  auto res = std::to_chars(buf, buf + sizeof(buf), v,
                           std::chars_format::fixed);
  return std::string(buf, res.ptr);
}

}  // namespace detail

// Atomic write: temp file in the same directory, then rename.
inline void cache_store(const std::filesystem::path& path,
                        std::span<const WeatherRecord> records) {
  for (const auto& r : records)
    if (r.site_id.find(',') != std::string::npos)
      throw IoError("site_id contains a comma: " + r.site_id);

  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp.string() + " for writing");
    out << kCacheHeader << '\n';
    for (const auto& r : records) {
      out << r.site_id << ',' << to_iso(r.date);
      const auto row = feature_row(r);
      for (double v : row) out << ',' << detail::format_number(v);
      out << ',' << detail::format_number(r.prectot) << '\n';
    }
    if (!out) throw IoError("write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) throw IoError("rename to " + path.string() + " failed: " + ec.message());
}

inline std::vector<WeatherRecord> cache_load(
    const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());

  std::string line;
  if (!std::getline(in, line)) throw ParseError(1, "empty cache file");
  if (!line.empty() && line.back() == '\r') line.pop_back();
  if (line != kCacheHeader) throw ParseError(1, "unexpected cache header");

  std::vector<WeatherRecord> out;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;

    std::vector<std::string> fields;
    std::stringstream ss(line);
    std::string field;
    while (std::getline(ss, field, ',')) fields.push_back(field);
    if (fields.size() != 18)
      throw ParseError(lineno, "expected 18 fields, got " +
                                   std::to_string(fields.size()));

    WeatherRecord r;
    r.site_id = fields[0];
    auto date = parse_iso_date(fields[1]);
    if (!date) throw ParseError(lineno, "bad date: " + fields[1]);
    r.date = *date;

    double* slots[] = {&r.t2m,   &r.t2mdew,    &r.t2mwet,    &r.ts,
                       &r.t2m_range, &r.t2m_max, &r.t2m_min, &r.qv2m,
                       &r.rh2m,  &r.ps,        &r.ws10m,     &r.ws10m_max,
                       &r.ws10m_min, &r.ws10m_range, &r.wd10m, &r.prectot};
    for (std::size_t i = 0; i < 16; ++i) {
      const std::string& s = fields[i + 2];
      char* end = nullptr;
      const double v = std::strtod(s.c_str(), &end);
      if (end == s.c_str() || *end != '\0')
        throw ParseError(lineno, "bad number: " + s);
      *slots[i] = v;
    }
    out.push_back(std::move(r));
  }
  return out;
}

}  // namespace rainadapt
