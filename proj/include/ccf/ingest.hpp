#pragma once

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <system_error>
#include <tuple>
#include <vector>

#include "ccf/frame.hpp"
#include "ccf/schema.hpp"

namespace ccf {

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t' || s.front() == '\r' || s.front() == '\n'))
    s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r' || s.back() == '\n'))
    s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == ',') {
      out.push_back(trim(line.substr(start, i - start)));
      start = i + 1;
    }
  }
  return out;
}

/// Blank and non-numeric cells both map to the missing sentinel.
inline double parse_cell(std::string_view cell) {
  if (cell.empty()) return kMissing;
  if (cell.front() == '+') cell.remove_prefix(1);
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (ec != std::errc{} || ptr != cell.data() + cell.size() || !std::isfinite(v)) return kMissing;
  return v;
}

}  // namespace detail

/// Shortest decimal text that parses back to the same double.
inline std::string format_double(double v) {
  if (is_missing(v)) return {};
  char buf[64];
  auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

/// Most frequent spacing between consecutive timestamps; ties go to the
/// smaller spacing. Zero for frames with fewer than two rows.
inline std::int64_t modal_spacing(std::span<const Instant> ts) {
  std::map<std::int64_t, std::size_t> counts;
  for (std::size_t i = 1; i < ts.size(); ++i) ++counts[ts[i] - ts[i - 1]];
  std::int64_t best = 0;
  std::size_t best_count = 0;
  for (auto [gap, n] : counts)
    if (n > best_count) best = gap, best_count = n;
  return best;
}

/// Reads a `timestamp,<columns...>` CSV. When `expected` is non-empty the
/// header must contain exactly those names (any order); output columns follow
/// `expected` order.
inline TimeSeriesFrame read_csv(std::istream& in, const std::vector<std::string>& expected,
                                std::string provenance = {}) {
  std::string line;
  while (std::getline(in, line) && detail::trim(line).empty()) {
  }
  if (detail::trim(line).empty()) throw Error(ErrorKind::EmptyInput, "CSV has no header row");
  auto header = detail::split_commas(line);
  if (header.empty() || header.front() != "timestamp")
    throw Error(ErrorKind::Schema, "first CSV column must be 'timestamp'");

  std::vector<std::string> names;
  for (std::size_t i = 1; i < header.size(); ++i) {
    std::string name(header[i]);
    if (std::find(names.begin(), names.end(), name) != names.end())
      throw Error(ErrorKind::Schema, "duplicate column '" + name + "'");
    names.push_back(std::move(name));
  }
  std::vector<std::size_t> order;  // output column k <- csv field order[k]
  std::vector<std::string> out_names;
  if (expected.empty()) {
    out_names = names;
    for (std::size_t i = 0; i < names.size(); ++i) order.push_back(i + 1);
  } else {
    for (const auto& want : expected) {
      auto it = std::find(names.begin(), names.end(), want);
      if (it == names.end()) throw Error(ErrorKind::Schema, "missing column '" + want + "'");
      order.push_back(static_cast<std::size_t>(it - names.begin()) + 1);
    }
    for (const auto& have : names)
      if (std::find(expected.begin(), expected.end(), have) == expected.end())
        throw Error(ErrorKind::Schema, "unexpected column '" + have + "'");
    out_names = expected;
  }

  std::vector<Instant> ts;
  std::vector<std::vector<double>> values(out_names.size());
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    auto fields = detail::split_commas(line);
    if (fields.size() != header.size())
      throw Error(ErrorKind::Schema, "line " + std::to_string(line_no) + " has " + std::to_string(fields.size()) +
                                         " fields, header has " + std::to_string(header.size()));
    auto t = parse_iso8601(fields[0]);
    if (!t) throw Error(ErrorKind::Schema, "line " + std::to_string(line_no) + ": bad timestamp '" +
                                               std::string(fields[0]) + "'");
    if (!ts.empty() && *t <= ts.back())
      throw Error(ErrorKind::Ordering, "line " + std::to_string(line_no) + ": timestamp not after previous row");
    ts.push_back(*t);
    for (std::size_t k = 0; k < order.size(); ++k) values[k].push_back(detail::parse_cell(fields[order[k]]));
  }
  if (ts.empty()) throw Error(ErrorKind::EmptyInput, "CSV has no data rows");

  std::vector<TimeSeriesFrame::Column> cols;
  for (std::size_t k = 0; k < out_names.size(); ++k) cols.push_back({out_names[k], std::move(values[k])});
  auto interval = modal_spacing(ts);
  return TimeSeriesFrame(std::move(ts), std::move(cols), interval, std::move(provenance));
}

inline TimeSeriesFrame load_csv(const std::string& path, const PlantSchema& schema) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorKind::Io, "cannot open '" + path + "'");
  return read_csv(in, schema.all_columns(), "csv:" + path);
}

inline void write_csv(std::ostream& out, const TimeSeriesFrame& frame) {
  out << "timestamp";
  for (const auto& c : frame.columns()) out << ',' << c.name;
  out << '\n';
  auto ts = frame.timestamps();
  for (std::size_t r = 0; r < frame.rows(); ++r) {
    out << format_iso8601(ts[r]);
    for (const auto& c : frame.columns()) out << ',' << format_double(c.values[r]);
    out << '\n';
  }
}

inline void write_csv(const std::string& path, const TimeSeriesFrame& frame) {
  std::ofstream out(path);
  if (!out) throw Error(ErrorKind::Io, "cannot write '" + path + "'");
  write_csv(out, frame);
}

struct FillReport {
  TimeSeriesFrame frame;
  std::size_t filled = 0;
};

/// Time-weighted linear interpolation of interior gaps; leading and trailing
/// gaps take the nearest observed value.
inline FillReport fill_missing_report(const TimeSeriesFrame& frame) {
  auto ts = frame.timestamps();
  std::vector<TimeSeriesFrame::Column> cols;
  std::size_t filled = 0;
  for (const auto& col : frame.columns()) {
    std::vector<double> v = col.values;
    std::vector<std::size_t> known;
    for (std::size_t i = 0; i < v.size(); ++i)
      if (!is_missing(v[i])) known.push_back(i);
    if (known.empty()) throw Error(ErrorKind::UnfillableColumn, "column '" + col.name + "' has no observed values");
    if (known.size() < v.size()) {
      for (std::size_t i = 0; i < known.front(); ++i) v[i] = v[known.front()], ++filled;
      for (std::size_t i = known.back() + 1; i < v.size(); ++i) v[i] = v[known.back()], ++filled;
      for (std::size_t k = 1; k < known.size(); ++k) {
        std::size_t lo = known[k - 1], hi = known[k];
        double span = static_cast<double>(ts[hi] - ts[lo]);
        for (std::size_t i = lo + 1; i < hi; ++i) {
          double w = static_cast<double>(ts[i] - ts[lo]) / span;
          v[i] = v[lo] + w * (v[hi] - v[lo]);
          ++filled;
        }
      }
    }
    cols.push_back({col.name, std::move(v)});
  }
  std::vector<Instant> times(ts.begin(), ts.end());
  return {TimeSeriesFrame(std::move(times), std::move(cols), frame.interval_s(), frame.provenance()), filled};
}

inline TimeSeriesFrame fill_missing(const TimeSeriesFrame& frame) { return fill_missing_report(frame).frame; }

/// Keeps rows 0, 2, 4, ... of a 300 s frame, yielding a 600 s frame.
inline TimeSeriesFrame downsample_alternate(const TimeSeriesFrame& frame) {
  if (frame.interval_s() != 300)
    throw Error(ErrorKind::InvalidArgument,
                "alternate-row downsampling expects a 300 s frame, got " + std::to_string(frame.interval_s()) + " s");
  if (frame.rows() < 2) throw Error(ErrorKind::InsufficientData, "need at least 2 rows to downsample");
  auto ts = frame.timestamps();
  std::vector<Instant> out_ts;
  for (std::size_t i = 0; i < ts.size(); i += 2) out_ts.push_back(ts[i]);
  std::vector<TimeSeriesFrame::Column> cols;
  for (const auto& c : frame.columns()) {
    std::vector<double> v;
    v.reserve(out_ts.size());
    for (std::size_t i = 0; i < c.values.size(); i += 2) v.push_back(c.values[i]);
    cols.push_back({c.name, std::move(v)});
  }
  return TimeSeriesFrame(std::move(out_ts), std::move(cols), 600, frame.provenance() + "|downsampled:600");
}

/// Row-wise concatenation of two frames with the same columns and interval.
/// A gap between the segments is allowed and recorded in the provenance.
inline TimeSeriesFrame concat(const TimeSeriesFrame& a, const TimeSeriesFrame& b) {
  if (a.empty() || b.empty()) throw Error(ErrorKind::EmptyInput, "cannot concatenate an empty frame");
  if (a.column_names() != b.column_names()) throw Error(ErrorKind::Schema, "column sets differ");
  if (a.interval_s() != b.interval_s()) throw Error(ErrorKind::Schema, "intervals differ");
  auto ta = a.timestamps();
  auto tb = b.timestamps();
  if (tb.front() <= ta.back()) throw Error(ErrorKind::Ordering, "second frame does not start after the first ends");
  std::vector<Instant> ts(ta.begin(), ta.end());
  ts.insert(ts.end(), tb.begin(), tb.end());
  std::vector<TimeSeriesFrame::Column> cols;
  for (std::size_t c = 0; c < a.column_count(); ++c) {
    auto v = a.columns()[c].values;
    const auto& w = b.columns()[c].values;
    v.insert(v.end(), w.begin(), w.end());
    cols.push_back({a.columns()[c].name, std::move(v)});
  }
  std::string prov = a.provenance() + "+" + b.provenance();
  auto gap = tb.front() - ta.back();
  if (gap != a.interval_s()) prov += "|gap:" + format_iso8601(ta.back()) + ".." + format_iso8601(tb.front());
  return TimeSeriesFrame(std::move(ts), std::move(cols), a.interval_s(), std::move(prov));
}

struct SplitFractions {
  double train = 0.70;
  double val = 0.15;
  double test = 0.15;
};

/// Segment lengths (floor, floor, remainder) for a chronological split.
inline std::tuple<std::size_t, std::size_t, std::size_t> split_lengths(std::size_t rows, SplitFractions f) {
  if (!(f.train > 0 && f.val > 0 && f.test > 0) || std::abs(f.train + f.val + f.test - 1.0) > 1e-9)
    throw Error(ErrorKind::InvalidArgument, "split fractions must be positive and sum to 1");
  auto n = static_cast<double>(rows);
  auto n_train = static_cast<std::size_t>(std::floor(n * f.train + 1e-9));
  auto n_val = static_cast<std::size_t>(std::floor(n * f.val + 1e-9));
  return {n_train, n_val, rows - n_train - n_val};
}

struct Split {
  TimeSeriesFrame train, val, test;
};

/// Contiguous train/val/test segments in time order; `min_rows` is the
/// smallest segment a consumer can use (its warm-up length).
inline Split chronological_split(const TimeSeriesFrame& frame, SplitFractions f = {}, std::size_t min_rows = 1) {
  auto [n_train, n_val, n_test] = split_lengths(frame.rows(), f);
  if (n_train < min_rows || n_val < min_rows || n_test < min_rows)
    throw Error(ErrorKind::SplitTooSmall, "split " + std::to_string(n_train) + "/" + std::to_string(n_val) + "/" +
                                              std::to_string(n_test) + " has a segment shorter than " +
                                              std::to_string(min_rows) + " rows");
  return {frame.slice(0, n_train), frame.slice(n_train, n_train + n_val), frame.slice(n_train + n_val, frame.rows())};
}

/// One row of the dataset registry manifest.
struct DatasetEntry {
  std::string id;
  std::string path;
  std::int64_t interval_s = 0;
  Instant start = 0;
  Instant end = 0;
  std::size_t rows = 0;
  std::string provenance;
};

inline DatasetEntry describe_dataset(const TimeSeriesFrame& frame, std::string id, std::string path) {
  if (frame.empty()) throw Error(ErrorKind::EmptyInput, "dataset '" + id + "' is empty");
  return {std::move(id), std::move(path), frame.interval_s(), frame.timestamps().front(), frame.timestamps().back(),
          frame.rows(), frame.provenance()};
}

}  // namespace ccf
