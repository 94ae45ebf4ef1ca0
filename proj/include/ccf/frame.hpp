#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <limits>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "ccf/error.hpp"

namespace ccf {

/// Seconds since the Unix epoch, UTC.
using Instant = std::int64_t;

inline constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

inline bool is_missing(double v) noexcept { return std::isnan(v); }

namespace detail {

inline bool read_digits(std::string_view s, std::size_t& pos, std::size_t count, int& out) {
  if (pos + count > s.size()) return false;
  int v = 0;
  for (std::size_t i = 0; i < count; ++i) {
    char c = s[pos + i];
    if (c < '0' || c > '9') return false;
    v = v * 10 + (c - '0');
  }
  pos += count;
  out = v;
  return true;
}

inline bool expect(std::string_view s, std::size_t& pos, char c) {
  if (pos >= s.size() || s[pos] != c) return false;
  ++pos;
  return true;
}

}  // namespace detail

/// Parses `YYYY-MM-DDTHH:MM[:SS[.frac]][Z|+HH:MM|-HH:MM]`; a space may replace
/// the `T`. A missing offset means UTC. Fractional seconds are truncated.
inline std::optional<Instant> parse_iso8601(std::string_view s) {
  using namespace std::chrono;
  std::size_t pos = 0;
  int y = 0, mo = 0, d = 0, hh = 0, mm = 0, ss = 0;
  if (!detail::read_digits(s, pos, 4, y) || !detail::expect(s, pos, '-') ||
      !detail::read_digits(s, pos, 2, mo) || !detail::expect(s, pos, '-') ||
      !detail::read_digits(s, pos, 2, d))
    return std::nullopt;
  if (pos < s.size()) {
    if (s[pos] != 'T' && s[pos] != ' ') return std::nullopt;
    ++pos;
    if (!detail::read_digits(s, pos, 2, hh) || !detail::expect(s, pos, ':') ||
        !detail::read_digits(s, pos, 2, mm))
      return std::nullopt;
    if (pos < s.size() && s[pos] == ':') {
      ++pos;
      if (!detail::read_digits(s, pos, 2, ss)) return std::nullopt;
      if (pos < s.size() && s[pos] == '.') {
        ++pos;
        while (pos < s.size() && s[pos] >= '0' && s[pos] <= '9') ++pos;
      }
    }
  }
  int offset = 0;
  if (pos < s.size()) {
    if (s[pos] == 'Z') {
      ++pos;
    } else if (s[pos] == '+' || s[pos] == '-') {
      int sign = s[pos] == '+' ? 1 : -1;
      ++pos;
      int oh = 0, om = 0;
      if (!detail::read_digits(s, pos, 2, oh)) return std::nullopt;
      if (pos < s.size() && s[pos] == ':') ++pos;
      if (!detail::read_digits(s, pos, 2, om)) return std::nullopt;
      offset = sign * (oh * 3600 + om * 60);
    }
  }
  if (pos != s.size()) return std::nullopt;
  year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)}, day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || hh > 23 || mm > 59 || ss > 60) return std::nullopt;
  auto days = sys_days{ymd}.time_since_epoch().count();
  return static_cast<Instant>(days) * 86400 + hh * 3600 + mm * 60 + ss - offset;
}

inline std::string format_iso8601(Instant t) {
  using namespace std::chrono;
  auto days = t >= 0 ? t / 86400 : (t - 86399) / 86400;
  auto rem = t - days * 86400;
  year_month_day ymd{sys_days{std::chrono::days{days}}};
  char buf[32];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02d:%02d:%02dZ", static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()), static_cast<unsigned>(ymd.day()),
                static_cast<int>(rem / 3600), static_cast<int>(rem % 3600 / 60),
                static_cast<int>(rem % 60));
  return buf;
}

/// Timestamped table of named float64 columns. Immutable once built; every
/// mutation-like operation returns a new frame.
class TimeSeriesFrame {
 public:
  struct Column {
    std::string name;
    std::vector<double> values;
  };

  TimeSeriesFrame() = default;

  TimeSeriesFrame(std::vector<Instant> timestamps, std::vector<Column> columns, std::int64_t interval_s,
                  std::string provenance = {})
      : timestamps_(std::move(timestamps)),
        columns_(std::move(columns)),
        interval_s_(interval_s),
        provenance_(std::move(provenance)) {
    for (std::size_t i = 1; i < timestamps_.size(); ++i)
      if (timestamps_[i] <= timestamps_[i - 1])
        throw Error(ErrorKind::Ordering, "timestamps not strictly increasing at row " + std::to_string(i));
    for (std::size_t c = 0; c < columns_.size(); ++c) {
      if (columns_[c].values.size() != timestamps_.size())
        throw Error(ErrorKind::ShapeMismatch, "column '" + columns_[c].name + "' has " +
                                                  std::to_string(columns_[c].values.size()) + " values, expected " +
                                                  std::to_string(timestamps_.size()));
      for (std::size_t k = 0; k < c; ++k)
        if (columns_[k].name == columns_[c].name)
          throw Error(ErrorKind::Schema, "duplicate column '" + columns_[c].name + "'");
    }
  }

  std::size_t rows() const noexcept { return timestamps_.size(); }
  std::size_t column_count() const noexcept { return columns_.size(); }
  bool empty() const noexcept { return timestamps_.empty(); }
  std::int64_t interval_s() const noexcept { return interval_s_; }
  const std::string& provenance() const noexcept { return provenance_; }
  std::span<const Instant> timestamps() const noexcept { return timestamps_; }
  const std::vector<Column>& columns() const noexcept { return columns_; }

  std::vector<std::string> column_names() const {
    std::vector<std::string> names;
    names.reserve(columns_.size());
    for (const auto& c : columns_) names.push_back(c.name);
    return names;
  }

  std::optional<std::size_t> find(std::string_view name) const noexcept {
    for (std::size_t i = 0; i < columns_.size(); ++i)
      if (columns_[i].name == name) return i;
    return std::nullopt;
  }

  bool has(std::string_view name) const noexcept { return find(name).has_value(); }

  std::span<const double> column(std::string_view name) const {
    auto idx = find(name);
    if (!idx) throw Error(ErrorKind::UnknownName, "no column '" + std::string(name) + "'");
    return columns_[*idx].values;
  }

  std::span<const double> column(std::size_t idx) const { return columns_.at(idx).values; }

  double at(std::size_t row, std::string_view name) const { return column(name)[row]; }

  std::size_t missing_count() const noexcept {
    std::size_t n = 0;
    for (const auto& c : columns_)
      n += static_cast<std::size_t>(std::count_if(c.values.begin(), c.values.end(), is_missing));
    return n;
  }

  /// True when every consecutive spacing equals the nominal interval.
  bool is_regular() const noexcept {
    for (std::size_t i = 1; i < timestamps_.size(); ++i)
      if (timestamps_[i] - timestamps_[i - 1] != interval_s_) return false;
    return true;
  }

  /// Rows [first, last) as a new frame.
  TimeSeriesFrame slice(std::size_t first, std::size_t last) const {
    if (first > last || last > rows())
      throw Error(ErrorKind::InvalidArgument, "slice [" + std::to_string(first) + ", " + std::to_string(last) +
                                                  ") outside frame of " + std::to_string(rows()) + " rows");
    std::vector<Instant> ts(timestamps_.begin() + static_cast<std::ptrdiff_t>(first),
                            timestamps_.begin() + static_cast<std::ptrdiff_t>(last));
    std::vector<Column> cols;
    cols.reserve(columns_.size());
    for (const auto& c : columns_)
      cols.push_back({c.name, std::vector<double>(c.values.begin() + static_cast<std::ptrdiff_t>(first),
                                                  c.values.begin() + static_cast<std::ptrdiff_t>(last))});
    return TimeSeriesFrame(std::move(ts), std::move(cols), interval_s_, provenance_);
  }

  /// Copy with one column's values replaced.
  TimeSeriesFrame with_column(std::string_view name, std::vector<double> values) const {
    auto idx = find(name);
    if (!idx) throw Error(ErrorKind::UnknownName, "no column '" + std::string(name) + "'");
    auto cols = columns_;
    cols[*idx].values = std::move(values);
    return TimeSeriesFrame(timestamps_, std::move(cols), interval_s_, provenance_);
  }

  TimeSeriesFrame with_provenance(std::string provenance) const {
    TimeSeriesFrame out = *this;
    out.provenance_ = std::move(provenance);
    return out;
  }

  friend bool operator==(const TimeSeriesFrame& a, const TimeSeriesFrame& b) {
    if (a.timestamps_ != b.timestamps_ || a.interval_s_ != b.interval_s_ || a.columns_.size() != b.columns_.size())
      return false;
    for (std::size_t c = 0; c < a.columns_.size(); ++c) {
      if (a.columns_[c].name != b.columns_[c].name) return false;
      const auto& x = a.columns_[c].values;
      const auto& y = b.columns_[c].values;
      for (std::size_t i = 0; i < x.size(); ++i) {
        bool mx = is_missing(x[i]), my = is_missing(y[i]);
        if (mx != my || (!mx && x[i] != y[i])) return false;
      }
    }
    return true;
  }

 private:
  std::vector<Instant> timestamps_;
  std::vector<Column> columns_;
  std::int64_t interval_s_ = 0;
  std::string provenance_;
};

}  // namespace ccf
