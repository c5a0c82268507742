#pragma once

// Task and image-record models, the task-file and manifest formats, and the
// spherical-Earth geodesy shared by filtering and clustering.

#include <algorithm>
#include <array>
#include <cctype>
#include <charconv>
#include <chrono>
#include <cmath>
#include <compare>
#include <cstdint>
#include <map>
#include <numbers>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <system_error>
#include <unordered_set>
#include <vector>

#include <fmt/format.h>
#include <json.hpp>

#include "triselect/error.hpp"

namespace triselect {

inline constexpr double kEarthRadiusM = 6371000.0;
inline constexpr double kTwoPi = 2.0 * std::numbers::pi;

inline double deg2rad(double deg) { return deg * std::numbers::pi / 180.0; }
inline double rad2deg(double rad) { return rad * 180.0 / std::numbers::pi; }

/// Wraps an angle into [0, 2*pi).
inline double wrap_two_pi(double a) {
  double r = std::fmod(a, kTwoPi);
  if (r < 0) r += kTwoPi;
  if (r >= kTwoPi) r = 0.0;
  return r;
}

class GeoPoint {
 public:
  GeoPoint() = default;
  GeoPoint(double lat, double lon) : lat_(lat), lon_(lon) {
    if (!std::isfinite(lat) || !std::isfinite(lon) || lat < -90.0 || lat > 90.0 || lon < -180.0 ||
        lon > 180.0) {
      throw Error(ErrorKind::ConstraintViolation, fmt::format("GeoPoint ({}, {}) out of range", lat, lon));
    }
  }

  double lat() const noexcept { return lat_; }
  double lon() const noexcept { return lon_; }

  friend bool operator==(const GeoPoint&, const GeoPoint&) = default;

 private:
  double lat_ = 0.0;
  double lon_ = 0.0;
};

/// Minute-precision calendar instant with canonical form "YYYYMMDDhhmm".
class Timestamp {
 public:
  Timestamp() = default;

  static Timestamp from_parts(int year, int month, int day, int hour, int minute) {
    using namespace std::chrono;
    const year_month_day ymd{std::chrono::year{year}, std::chrono::month{static_cast<unsigned>(month)},
                             std::chrono::day{static_cast<unsigned>(day)}};
    if (year < 0 || year > 9999 || month < 1 || month > 12 || day < 1 || !ymd.ok() || hour < 0 ||
        hour > 23 || minute < 0 || minute > 59) {
      throw Error(ErrorKind::MalformedField,
                  fmt::format("invalid date-time {:04}-{:02}-{:02} {:02}:{:02}", year, month, day, hour, minute));
    }
    Timestamp t;
    t.year_ = year;
    t.month_ = month;
    t.day_ = day;
    t.hour_ = hour;
    t.minute_ = minute;
    return t;
  }

  /// Parses the 12-digit form.
  static Timestamp parse(std::string_view s) {
    if (s.size() != 12 || !all_digits(s)) {
      throw Error(ErrorKind::MalformedField, fmt::format("timestamp '{}' is not 12 digits", s));
    }
    return from_parts(num(s, 0, 4), num(s, 4, 2), num(s, 6, 2), num(s, 8, 2), num(s, 10, 2));
  }

  /// Parses the 8-digit "MMDDhhmm" form with an explicit year.
  static Timestamp parse_short(std::string_view s, int year) {
    if (s.size() != 8 || !all_digits(s)) {
      throw Error(ErrorKind::MalformedField, fmt::format("timestamp '{}' is not 8 digits", s));
    }
    return from_parts(year, num(s, 0, 2), num(s, 2, 2), num(s, 4, 2), num(s, 6, 2));
  }

  std::string to_string() const {
    return fmt::format("{:04}{:02}{:02}{:02}{:02}", year_, month_, day_, hour_, minute_);
  }

  int year() const noexcept { return year_; }
  int month() const noexcept { return month_; }
  int day() const noexcept { return day_; }
  int hour() const noexcept { return hour_; }
  int minute() const noexcept { return minute_; }

  friend auto operator<=>(const Timestamp&, const Timestamp&) = default;

 private:
  static bool all_digits(std::string_view s) {
    return std::all_of(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
  }
  static int num(std::string_view s, std::size_t pos, std::size_t len) {
    int v = 0;
    for (std::size_t i = pos; i < pos + len; ++i) v = v * 10 + (s[i] - '0');
    return v;
  }

  int year_ = 1970;
  int month_ = 1;
  int day_ = 1;
  int hour_ = 0;
  int minute_ = 0;
};

class Resolution {
 public:
  Resolution() = default;
  Resolution(std::int64_t width, std::int64_t height) : width_(width), height_(height) {
    if (width < 1 || height < 1) {
      throw Error(ErrorKind::ConstraintViolation, fmt::format("resolution {}x{} must be positive", width, height));
    }
  }

  std::int64_t width() const noexcept { return width_; }
  std::int64_t height() const noexcept { return height_; }
  /// Shorter side, so "360p" means p_class >= 360.
  std::int64_t p_class() const noexcept { return std::min(width_, height_); }

  friend bool operator==(const Resolution&, const Resolution&) = default;

 private:
  std::int64_t width_ = 1;
  std::int64_t height_ = 1;
};

template <class T>
struct ClosedInterval {
  T lo{};
  T hi{};

  bool contains(const T& v) const { return !(v < lo) && !(hi < v); }
  friend bool operator==(const ClosedInterval&, const ClosedInterval&) = default;
};

struct TaskSpec {
  std::uint64_t tid = 0;
  std::set<std::string> formats;  // lowercase, dot-prefixed
  GeoPoint whr;
  ClosedInterval<Timestamp> whn;
  std::optional<double> ang_inter;  // radians
  std::optional<ClosedInterval<double>> alt_range;  // meters
  double d_min = 0.0;
  double d_max = 0.0;
  std::int64_t resol_min = 360;

  /// Throws ConstraintViolation when an invariant fails.
  void validate() const {
    if (formats.empty()) throw Error(ErrorKind::ConstraintViolation, "formats must be non-empty");
    if (whn.hi < whn.lo) throw Error(ErrorKind::ConstraintViolation, "whn start after end");
    if (ang_inter && !(*ang_inter > 0.0 && std::isfinite(*ang_inter))) {
      throw Error(ErrorKind::ConstraintViolation, "ang_inter must be > 0");
    }
    if (alt_range && !(alt_range->lo <= alt_range->hi)) {
      throw Error(ErrorKind::ConstraintViolation, "alt_range min exceeds max");
    }
    if (!(d_max > 0.0) || !std::isfinite(d_max)) throw Error(ErrorKind::ConstraintViolation, "d_max must be > 0");
    if (!(d_min >= 0.0)) throw Error(ErrorKind::ConstraintViolation, "d_min must be >= 0");
    if (d_min > d_max) throw Error(ErrorKind::ConstraintViolation, "d_min exceeds d_max");
    if (resol_min < 0) throw Error(ErrorKind::ConstraintViolation, "resol_min must be >= 0");
  }

  friend bool operator==(const TaskSpec&, const TaskSpec&) = default;
};

struct ImageRecord {
  std::uint64_t pid = 0;
  std::uint64_t tid = 0;
  std::uint64_t wid = 0;
  std::string format;
  Timestamp time;
  GeoPoint locat;
  double heig = 0.0;
  Resolution resol;
  std::optional<double> heading;  // radians in [0, 2*pi)
  std::optional<std::string> path;

  friend bool operator==(const ImageRecord&, const ImageRecord&) = default;
};

// ---------------------------------------------------------------------------
// Geodesy

/// Haversine great-circle distance in meters.
inline double geo_distance(const GeoPoint& a, const GeoPoint& b) {
  const double p1 = deg2rad(a.lat());
  const double p2 = deg2rad(b.lat());
  const double dp = p2 - p1;
  const double dl = deg2rad(b.lon() - a.lon());
  const double s1 = std::sin(dp / 2.0);
  const double s2 = std::sin(dl / 2.0);
  double h = s1 * s1 + std::cos(p1) * std::cos(p2) * s2 * s2;
  h = std::clamp(h, 0.0, 1.0);
  return 2.0 * kEarthRadiusM * std::asin(std::sqrt(h));
}

inline bool coincident(const GeoPoint& a, const GeoPoint& b) {
  return std::abs(a.lat() - b.lat()) < 1e-9 && std::abs(a.lon() - b.lon()) < 1e-9;
}

/// Initial great-circle bearing, 0 = north, clockwise, in [0, 2*pi).
inline double geo_bearing(const GeoPoint& from, const GeoPoint& to) {
  if (coincident(from, to)) {
    throw Error(ErrorKind::DegeneratePair,
                fmt::format("bearing undefined between coincident points ({}, {})", from.lat(), from.lon()));
  }
  const double p1 = deg2rad(from.lat());
  const double p2 = deg2rad(to.lat());
  const double dl = deg2rad(to.lon() - from.lon());
  const double y = std::sin(dl) * std::cos(p2);
  const double x = std::cos(p1) * std::sin(p2) - std::sin(p1) * std::cos(p2) * std::cos(dl);
  return wrap_two_pi(std::atan2(y, x));
}

struct LocalOffset {
  double east = 0.0;
  double north = 0.0;
};

/// Local equirectangular projection about `origin`, in meters.
inline LocalOffset project_local(const GeoPoint& p, const GeoPoint& origin) {
  double dlon = p.lon() - origin.lon();
  if (dlon > 180.0) dlon -= 360.0;
  if (dlon < -180.0) dlon += 360.0;
  return {kEarthRadiusM * deg2rad(dlon) * std::cos(deg2rad(origin.lat())),
          kEarthRadiusM * deg2rad(p.lat() - origin.lat())};
}

// ---------------------------------------------------------------------------
// Text helpers

namespace detail {

inline std::string_view trim(std::string_view s) {
  const auto ws = [](unsigned char c) { return std::isspace(c) != 0; };
  while (!s.empty() && ws(s.front())) s.remove_prefix(1);
  while (!s.empty() && ws(s.back())) s.remove_suffix(1);
  return s;
}

inline std::string lower(std::string_view s) {
  std::string out(s);
  std::transform(out.begin(), out.end(), out.begin(), [](unsigned char c) { return std::tolower(c); });
  return out;
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> parts;
  std::size_t start = 0;
  for (;;) {
    const auto pos = s.find(sep, start);
    parts.push_back(trim(s.substr(start, pos == std::string_view::npos ? std::string_view::npos : pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return parts;
}

inline std::string_view strip_parens(std::string_view s) {
  s = trim(s);
  if (s.size() >= 2 && s.front() == '(' && s.back() == ')') s = trim(s.substr(1, s.size() - 2));
  return s;
}

[[noreturn]] inline void bad_field(std::string_view key, std::string_view value, std::string_view why) {
  throw Error(ErrorKind::MalformedField, fmt::format("{} = '{}': {}", key, value, why));
}

inline double parse_double(std::string_view key, std::string_view s) {
  s = trim(s);
  double v = 0.0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc{} || ptr != end || !std::isfinite(v)) bad_field(key, s, "not a finite number");
  return v;
}

inline std::uint64_t parse_u64(std::string_view key, std::string_view s) {
  s = trim(s);
  std::uint64_t v = 0;
  const auto* end = s.data() + s.size();
  auto [ptr, ec] = std::from_chars(s.data(), end, v);
  if (ec != std::errc{} || ptr != end || s.empty()) bad_field(key, s, "not a non-negative integer");
  return v;
}

/// Coordinate with an optional hemisphere prefix (N/S for latitude, E/W for
/// longitude), e.g. "N34.246" or "-12.5".
inline double parse_coordinate(std::string_view key, std::string_view s, bool latitude) {
  s = trim(s);
  double sign = 1.0;
  if (!s.empty()) {
    const char h = static_cast<char>(std::toupper(static_cast<unsigned char>(s.front())));
    if ((latitude && (h == 'N' || h == 'S')) || (!latitude && (h == 'E' || h == 'W'))) {
      sign = (h == 'S' || h == 'W') ? -1.0 : 1.0;
      s.remove_prefix(1);
    }
  }
  return sign * parse_double(key, s);
}

/// Radians, either numeric or a multiple/fraction of pi such as "pi/4",
/// "3*pi/2" or "π/4".
inline double parse_angle(std::string_view key, std::string_view s) {
  std::string text(trim(s));
  for (auto pos = text.find("π"); pos != std::string::npos; pos = text.find("π")) text.replace(pos, 2, "pi");
  const std::string lowered = lower(text);
  const auto pi_pos = lowered.find("pi");
  if (pi_pos == std::string::npos) return parse_double(key, lowered);

  double factor = 1.0;
  std::string_view head = trim(std::string_view(lowered).substr(0, pi_pos));
  if (!head.empty()) {
    if (head.back() == '*') head = trim(head.substr(0, head.size() - 1));
    factor = parse_double(key, head);
  }
  double divisor = 1.0;
  std::string_view tail = trim(std::string_view(lowered).substr(pi_pos + 2));
  if (!tail.empty()) {
    if (tail.front() != '/') bad_field(key, s, "expected '/' after pi");
    divisor = parse_double(key, tail.substr(1));
    if (divisor == 0.0) bad_field(key, s, "division by zero");
  }
  return factor * std::numbers::pi / divisor;
}

inline std::pair<std::string_view, std::string_view> parse_pair(std::string_view key, std::string_view value) {
  const auto parts = split(strip_parens(value), ',');
  if (parts.size() != 2 || parts[0].empty() || parts[1].empty()) bad_field(key, value, "expected two comma-separated values");
  return {parts[0], parts[1]};
}

inline std::string normalize_format(std::string_view raw) {
  std::string f = lower(trim(raw));
  if (!f.empty() && f.front() != '.') f.insert(f.begin(), '.');
  return f;
}

inline std::string format_double(double v) { return fmt::format("{}", v); }

}  // namespace detail

// ---------------------------------------------------------------------------
// Task file

/// Parses the `key = value` task document. Eight-digit "MMDDhhmm" whn
/// endpoints are expanded with the `year` key, which is then mandatory.
inline TaskSpec parse_task_spec(std::string_view text) {
  static const std::set<std::string, std::less<>> known = {"tid",       "formats", "whr",  "whn",  "year",
                                                           "ang_inter", "alt_range", "d_min", "d_max", "resol_min"};
  std::map<std::string, std::string, std::less<>> kv;
  std::size_t line_no = 0;
  for (std::string_view rest = text; !rest.empty();) {
    const auto nl = rest.find('\n');
    std::string_view line = rest.substr(0, nl);
    rest = nl == std::string_view::npos ? std::string_view{} : rest.substr(nl + 1);
    ++line_no;
    if (const auto hash = line.find('#'); hash != std::string_view::npos) line = line.substr(0, hash);
    line = detail::trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string_view::npos) {
      throw Error(ErrorKind::MalformedField, fmt::format("line {}: expected 'key = value'", line_no));
    }
    const std::string key = detail::lower(detail::trim(line.substr(0, eq)));
    const std::string_view value = detail::trim(line.substr(eq + 1));
    if (!known.contains(key)) throw Error(ErrorKind::MalformedField, fmt::format("line {}: unknown key '{}'", line_no, key));
    if (!kv.emplace(key, std::string(value)).second) {
      throw Error(ErrorKind::MalformedField, fmt::format("line {}: duplicate key '{}'", line_no, key));
    }
  }

  const auto require = [&](std::string_view key) -> const std::string& {
    const auto it = kv.find(key);
    if (it == kv.end()) throw Error(ErrorKind::MissingField, fmt::format("task file lacks '{}'", key));
    return it->second;
  };

  TaskSpec task;
  task.tid = detail::parse_u64("tid", require("tid"));

  for (auto f : detail::split(detail::strip_parens(require("formats")), ',')) {
    if (f.empty()) detail::bad_field("formats", require("formats"), "empty format entry");
    task.formats.insert(detail::normalize_format(f));
  }

  {
    const auto [lat, lon] = detail::parse_pair("whr", require("whr"));
    const double la = detail::parse_coordinate("whr", lat, true);
    const double lo = detail::parse_coordinate("whr", lon, false);
    if (la < -90.0 || la > 90.0 || lo < -180.0 || lo > 180.0) detail::bad_field("whr", require("whr"), "out of range");
    task.whr = GeoPoint(la, lo);
  }

  {
    const auto [start, end] = detail::parse_pair("whn", require("whn"));
    std::optional<int> year;
    if (const auto it = kv.find("year"); it != kv.end()) {
      year = static_cast<int>(detail::parse_u64("year", it->second));
    }
    const auto stamp = [&](std::string_view s) {
      if (s.size() == 12) return Timestamp::parse(s);
      if (s.size() == 8) {
        if (!year) throw Error(ErrorKind::MissingField, "task file lacks 'year' required by 8-digit whn");
        return Timestamp::parse_short(s, *year);
      }
      detail::bad_field("whn", s, "expected 8 or 12 digits");
    };
    task.whn = {stamp(start), stamp(end)};
  }

  if (const auto it = kv.find("ang_inter"); it != kv.end()) task.ang_inter = detail::parse_angle("ang_inter", it->second);

  if (const auto it = kv.find("alt_range"); it != kv.end()) {
    auto [lo, hi] = detail::parse_pair("alt_range", it->second);
    const auto meters = [](std::string_view s) {
      s = detail::trim(s);
      if (!s.empty() && (s.back() == 'm' || s.back() == 'M')) s.remove_suffix(1);
      return detail::parse_double("alt_range", s);
    };
    task.alt_range = ClosedInterval<double>{meters(lo), meters(hi)};
  }

  if (const auto it = kv.find("d_min"); it != kv.end()) task.d_min = detail::parse_double("d_min", it->second);
  task.d_max = detail::parse_double("d_max", require("d_max"));

  if (const auto it = kv.find("resol_min"); it != kv.end()) {
    std::string_view v = detail::trim(it->second);
    if (!v.empty() && (v.back() == 'p' || v.back() == 'P')) v.remove_suffix(1);
    task.resol_min = static_cast<std::int64_t>(detail::parse_u64("resol_min", v));
  }

  task.validate();
  return task;
}

/// Writes the canonical task document (12-digit times, radians, meters).
inline std::string serialize_task_spec(const TaskSpec& task) {
  std::string formats;
  for (const auto& f : task.formats) {
    if (!formats.empty()) formats += ",";
    formats += f;
  }
  std::string out;
  out += fmt::format("tid = {}\n", task.tid);
  out += fmt::format("formats = {}\n", formats);
  out += fmt::format("whr = {},{}\n", detail::format_double(task.whr.lat()), detail::format_double(task.whr.lon()));
  out += fmt::format("whn = {},{}\n", task.whn.lo.to_string(), task.whn.hi.to_string());
  if (task.ang_inter) out += fmt::format("ang_inter = {}\n", detail::format_double(*task.ang_inter));
  if (task.alt_range) {
    out += fmt::format("alt_range = {},{}\n", detail::format_double(task.alt_range->lo),
                       detail::format_double(task.alt_range->hi));
  }
  out += fmt::format("d_min = {}\n", detail::format_double(task.d_min));
  out += fmt::format("d_max = {}\n", detail::format_double(task.d_max));
  out += fmt::format("resol_min = {}\n", task.resol_min);
  return out;
}

// ---------------------------------------------------------------------------
// Manifest (newline-delimited JSON)

struct Manifest {
  std::vector<ImageRecord> records;
  std::size_t unknown_key_warnings = 0;
};

namespace detail {

inline const std::unordered_set<std::string>& manifest_keys() {
  static const std::unordered_set<std::string> keys = {"pid", "tid",  "wid",   "format", "time",    "lat",
                                                       "lon", "heig", "width", "height", "heading", "path"};
  return keys;
}

inline ImageRecord record_from_json(const nlohmann::json& j, std::size_t line_no, std::size_t& unknown) {
  const auto fail = [&](const std::string& why) -> RecordError {
    return RecordError(ErrorKind::MalformedRecord, line_no, why);
  };
  if (!j.is_object()) throw fail("record is not a JSON object");
  for (const auto& [key, _] : j.items()) {
    if (!manifest_keys().contains(key)) ++unknown;
  }
  const auto field = [&](const char* key) -> const nlohmann::json& {
    const auto it = j.find(key);
    if (it == j.end()) throw fail(fmt::format("missing '{}'", key));
    return *it;
  };
  const auto id = [&](const char* key) -> std::uint64_t {
    const auto& v = field(key);
    if (!v.is_number_unsigned()) throw fail(fmt::format("'{}' must be a non-negative integer", key));
    return v.get<std::uint64_t>();
  };
  const auto number = [&](const char* key) -> double {
    const auto& v = field(key);
    if (!v.is_number()) throw fail(fmt::format("'{}' must be a number", key));
    const double d = v.get<double>();
    if (!std::isfinite(d)) throw fail(fmt::format("'{}' must be finite", key));
    return d;
  };
  const auto text = [&](const char* key) -> std::string {
    const auto& v = field(key);
    if (!v.is_string()) throw fail(fmt::format("'{}' must be a string", key));
    return v.get<std::string>();
  };

  ImageRecord r;
  try {
    r.pid = id("pid");
    r.tid = id("tid");
    r.wid = id("wid");
    r.format = text("format");
    r.time = Timestamp::parse(text("time"));
    r.locat = GeoPoint(number("lat"), number("lon"));
    r.heig = number("heig");
    r.resol = Resolution(static_cast<std::int64_t>(id("width")), static_cast<std::int64_t>(id("height")));
    if (j.contains("heading") && !j["heading"].is_null()) {
      const double h = number("heading");
      if (h < 0.0 || h >= kTwoPi) throw fail("'heading' must lie in [0, 2*pi)");
      r.heading = h;
    }
    if (j.contains("path") && !j["path"].is_null()) r.path = text("path");
  } catch (const RecordError&) {
    throw;
  } catch (const Error& e) {
    throw fail(e.what());
  }
  return r;
}

}  // namespace detail

/// Parses the manifest. Blank lines are skipped; unknown keys are counted in
/// `unknown_key_warnings` rather than rejected.
inline Manifest parse_manifest(std::string_view text) {
  Manifest out;
  std::unordered_set<std::uint64_t> seen;
  std::size_t line_no = 0;
  for (std::string_view rest = text; !rest.empty();) {
    const auto nl = rest.find('\n');
    const std::string_view line = detail::trim(rest.substr(0, nl));
    rest = nl == std::string_view::npos ? std::string_view{} : rest.substr(nl + 1);
    ++line_no;
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded()) throw RecordError(ErrorKind::MalformedRecord, line_no, "invalid JSON");
    ImageRecord r = detail::record_from_json(j, line_no, out.unknown_key_warnings);
    if (!seen.insert(r.pid).second) throw PidError(ErrorKind::DuplicatePid, r.pid, "pid repeated in manifest");
    out.records.push_back(std::move(r));
  }
  return out;
}

inline nlohmann::ordered_json to_manifest_json(const ImageRecord& r) {
  nlohmann::ordered_json j;
  j["pid"] = r.pid;
  j["tid"] = r.tid;
  j["wid"] = r.wid;
  j["format"] = r.format;
  j["time"] = r.time.to_string();
  j["lat"] = r.locat.lat();
  j["lon"] = r.locat.lon();
  j["heig"] = r.heig;
  j["width"] = r.resol.width();
  j["height"] = r.resol.height();
  if (r.heading) j["heading"] = *r.heading;
  if (r.path) j["path"] = *r.path;
  return j;
}

inline std::string serialize_manifest(const std::vector<ImageRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    out += to_manifest_json(r).dump();
    out += '\n';
  }
  return out;
}

}  // namespace triselect
