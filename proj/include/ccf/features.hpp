#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <memory>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include <zlib.h>

#include "ccf/frame.hpp"

namespace ccf {

enum class RollingStat { Mean, Std };

inline std::string to_string(RollingStat s) { return s == RollingStat::Mean ? "rmean" : "rstd"; }

inline std::string lag_name(const std::string& col, std::size_t lag) { return col + "_lag" + std::to_string(lag); }

inline std::string rolling_name(const std::string& col, std::size_t w, RollingStat s) {
  return col + "_" + to_string(s) + std::to_string(w);
}

inline std::string crc32_hex(std::string_view text) {
  auto crc = ::crc32(0L, reinterpret_cast<const Bytef*>(text.data()), static_cast<uInt>(text.size()));
  char buf[16];
  std::snprintf(buf, sizeof buf, "%08lx", static_cast<unsigned long>(crc));
  return buf;
}

/// Feature-engineering recipe shared by training and inference.
struct FeatureConfig {
  std::vector<std::string> inputs;
  std::string target;
  std::size_t lag_steps = 12;  // 0 disables lag columns
  std::vector<std::size_t> rolling_windows{6, 12, 24, 36};
  std::vector<RollingStat> rolling_stats{RollingStat::Mean, RollingStat::Std};
  bool include_target_lags = false;
  std::size_t window = 12;  // model lookback W, in steps
  std::int64_t interval_s = 300;
  /// Enforce one-hour lags and 30 min/1 h/2 h/3 h rolling windows.
  bool strict_cadence = true;

  /// One-hour lag and 30 min / 1 h / 2 h / 3 h windows at `interval_s`.
  static FeatureConfig hourly(std::int64_t interval_s, std::vector<std::string> inputs, std::string target,
                              std::size_t window = 12) {
    FeatureConfig cfg;
    cfg.inputs = std::move(inputs);
    cfg.target = std::move(target);
    cfg.interval_s = interval_s;
    cfg.lag_steps = static_cast<std::size_t>(3600 / interval_s);
    cfg.rolling_windows.clear();
    for (std::int64_t secs : {1800, 3600, 7200, 10800})
      cfg.rolling_windows.push_back(static_cast<std::size_t>(secs / interval_s));
    cfg.window = window;
    return cfg;
  }

  /// Columns that receive lag and rolling features.
  std::vector<std::string> engineered_sources() const {
    auto src = inputs;
    if (include_target_lags) src.push_back(target);
    return src;
  }

  std::size_t max_window() const {
    std::size_t m = 0;
    for (auto w : rolling_windows) m = std::max(m, w);
    return m;
  }

  /// First usable row: max(lag, largest window - 1).
  std::size_t warmup() const {
    std::size_t rolling = rolling_stats.empty() || rolling_windows.empty() ? 0 : max_window() - 1;
    return std::max(lag_steps, rolling);
  }

  /// Raw inputs, then lags, then rolling stats ordered by (column, window, stat).
  std::vector<std::string> column_names() const {
    std::vector<std::string> names = inputs;
    auto src = engineered_sources();
    if (lag_steps > 0)
      for (const auto& c : src) names.push_back(lag_name(c, lag_steps));
    for (const auto& c : src)
      for (auto w : rolling_windows)
        for (auto s : rolling_stats) names.push_back(rolling_name(c, w, s));
    return names;
  }

  std::size_t dim() const { return column_names().size(); }

  void validate() const {
    if (inputs.empty()) throw Error(ErrorKind::Config, "feature config has no inputs");
    if (target.empty()) throw Error(ErrorKind::Config, "feature config has no target");
    if (window < 1) throw Error(ErrorKind::Config, "input window must be >= 1");
    if (interval_s <= 0) throw Error(ErrorKind::Config, "interval must be positive");
    if (include_target_lags && lag_steps == 0 && (rolling_stats.empty() || rolling_windows.empty()))
      throw Error(ErrorKind::Config, "target lags requested but no lag or rolling features enabled");
    for (auto w : rolling_windows)
      if (w < 2) throw Error(ErrorKind::DegenerateWindow, "rolling window must be >= 2");
    if (strict_cadence) {
      if (lag_steps > 0 && static_cast<std::int64_t>(lag_steps) * interval_s != 3600)
        throw Error(ErrorKind::Config, "lag must span one hour");
      for (auto w : rolling_windows) {
        auto secs = static_cast<std::int64_t>(w) * interval_s;
        if (secs != 1800 && secs != 3600 && secs != 7200 && secs != 10800)
          throw Error(ErrorKind::Config, "rolling windows must span 30 min, 1 h, 2 h or 3 h");
      }
    }
  }

  std::string canonical() const {
    std::ostringstream os;
    os << "inputs=";
    for (const auto& c : inputs) os << c << ';';
    os << "|target=" << target << "|lag=" << lag_steps << "|windows=";
    for (auto w : rolling_windows) os << w << ';';
    os << "|stats=";
    for (auto s : rolling_stats) os << to_string(s) << ';';
    os << "|target_lags=" << include_target_lags << "|W=" << window << "|interval=" << interval_s;
    return os.str();
  }

  std::string fingerprint() const { return crc32_hex(canonical()); }
};

/// Appends `<name>_lag<L>` columns; the first L rows are missing (warm-up).
inline TimeSeriesFrame make_lags(const TimeSeriesFrame& frame, const std::vector<std::string>& cols,
                                 std::size_t lag_steps) {
  if (lag_steps < 1) throw Error(ErrorKind::InvalidArgument, "lag must be >= 1");
  if (lag_steps >= frame.rows())
    throw Error(ErrorKind::InsufficientData, "lag " + std::to_string(lag_steps) + " needs more than " +
                                                 std::to_string(frame.rows()) + " rows");
  auto out_cols = frame.columns();
  for (const auto& name : cols) {
    auto src = frame.column(name);
    std::vector<double> v(src.size(), kMissing);
    for (std::size_t t = lag_steps; t < src.size(); ++t) v[t] = src[t - lag_steps];
    out_cols.push_back({lag_name(name, lag_steps), std::move(v)});
  }
  auto ts = frame.timestamps();
  return TimeSeriesFrame({ts.begin(), ts.end()}, std::move(out_cols), frame.interval_s(), frame.provenance());
}

namespace detail {

inline void rolling_into(std::span<const double> src, std::size_t w, RollingStat stat, std::vector<double>& out) {
  out.assign(src.size(), kMissing);
  for (std::size_t t = w - 1; t < src.size(); ++t) {
    double sum = 0.0;
    for (std::size_t k = t + 1 - w; k <= t; ++k) sum += src[k];
    double mean = sum / static_cast<double>(w);
    if (stat == RollingStat::Mean) {
      out[t] = mean;
    } else {
      double ss = 0.0;
      for (std::size_t k = t + 1 - w; k <= t; ++k) ss += (src[k] - mean) * (src[k] - mean);
      out[t] = std::sqrt(ss / static_cast<double>(w - 1));
    }
  }
}

}  // namespace detail

/// Appends trailing rolling statistics, ordered by (column, window, stat).
/// Standard deviation uses the sample divisor (w - 1).
inline TimeSeriesFrame make_rolling(const TimeSeriesFrame& frame, const std::vector<std::string>& cols,
                                    const std::vector<std::size_t>& windows, const std::vector<RollingStat>& stats) {
  for (auto w : windows) {
    if (w < 1) throw Error(ErrorKind::DegenerateWindow, "rolling window must be >= 1");
    if (w < 2 && std::find(stats.begin(), stats.end(), RollingStat::Std) != stats.end())
      throw Error(ErrorKind::DegenerateWindow, "rolling std needs a window of at least 2");
    if (w > frame.rows())
      throw Error(ErrorKind::InsufficientData, "rolling window " + std::to_string(w) + " exceeds frame length");
  }
  auto out_cols = frame.columns();
  for (const auto& name : cols) {
    auto src = frame.column(name);
    for (auto w : windows)
      for (auto s : stats) {
        std::vector<double> v;
        detail::rolling_into(src, w, s, v);
        out_cols.push_back({rolling_name(name, w, s), std::move(v)});
      }
  }
  auto ts = frame.timestamps();
  return TimeSeriesFrame({ts.begin(), ts.end()}, std::move(out_cols), frame.interval_s(), frame.provenance());
}

/// Unscaled engineered columns (config column order), full length with
/// warm-up rows missing.
inline TimeSeriesFrame engineer(const TimeSeriesFrame& frame, const FeatureConfig& cfg) {
  cfg.validate();
  auto ts = frame.timestamps();
  std::vector<TimeSeriesFrame::Column> base;
  auto sources = cfg.engineered_sources();
  for (const auto& c : cfg.inputs) base.push_back({c, std::vector<double>(frame.column(c).begin(), frame.column(c).end())});
  if (cfg.include_target_lags)
    base.push_back({"__target__" + cfg.target,
                    std::vector<double>(frame.column(cfg.target).begin(), frame.column(cfg.target).end())});
  TimeSeriesFrame work({ts.begin(), ts.end()}, std::move(base), frame.interval_s(), frame.provenance());

  std::vector<std::string> work_sources = cfg.inputs;
  if (cfg.include_target_lags) work_sources.push_back("__target__" + cfg.target);
  if (cfg.lag_steps > 0) work = make_lags(work, work_sources, cfg.lag_steps);
  if (!cfg.rolling_stats.empty() && !cfg.rolling_windows.empty())
    work = make_rolling(work, work_sources, cfg.rolling_windows, cfg.rolling_stats);

  // Rename the private target alias to its public engineered names and drop the raw copy.
  std::vector<TimeSeriesFrame::Column> cols;
  const std::string alias = "__target__" + cfg.target;
  for (const auto& c : work.columns()) {
    if (c.name == alias) continue;
    auto name = c.name;
    if (name.rfind(alias, 0) == 0) name = cfg.target + name.substr(alias.size());
    cols.push_back({std::move(name), c.values});
  }
  return TimeSeriesFrame({ts.begin(), ts.end()}, std::move(cols), frame.interval_s(), frame.provenance());
}

/// Per-column min-max state mapping the training range onto [0, 1].
struct ScalerState {
  std::vector<std::string> names;
  std::vector<double> min;
  std::vector<double> max;

  std::size_t index(std::string_view name) const {
    for (std::size_t i = 0; i < names.size(); ++i)
      if (names[i] == name) return i;
    throw Error(ErrorKind::UnknownName, "scaler has no column '" + std::string(name) + "'");
  }

  double scale(std::size_t i, double v) const { return (v - min[i]) / (max[i] - min[i]); }
  double invert(std::size_t i, double s) const { return min[i] + s * (max[i] - min[i]); }
  double scale(std::string_view name, double v) const { return scale(index(name), v); }
  double invert(std::string_view name, double s) const { return invert(index(name), s); }

  friend bool operator==(const ScalerState&, const ScalerState&) = default;
};

/// Fits min/max over rows [first, last) of each named column, ignoring missing
/// cells. `last == 0` means the whole frame.
inline ScalerState fit_scaler(const TimeSeriesFrame& frame, const std::vector<std::string>& cols, std::size_t first = 0,
                              std::size_t last = 0) {
  if (last == 0) last = frame.rows();
  ScalerState s;
  for (const auto& name : cols) {
    auto v = frame.column(name);
    double lo = std::numeric_limits<double>::infinity(), hi = -lo;
    for (std::size_t t = first; t < last && t < v.size(); ++t) {
      if (is_missing(v[t])) continue;
      lo = std::min(lo, v[t]);
      hi = std::max(hi, v[t]);
    }
    if (!(lo < hi)) throw Error(ErrorKind::DegenerateScale, "column '" + name + "' has fewer than 2 distinct values");
    s.names.push_back(name);
    s.min.push_back(lo);
    s.max.push_back(hi);
  }
  return s;
}

/// Scaler for every matrix column plus the target, fitted on raw rows
/// [0, train_rows) of `frame` (warm-up rows excluded).
inline ScalerState fit_feature_scaler(const TimeSeriesFrame& frame, const FeatureConfig& cfg, std::size_t train_rows) {
  auto eng = engineer(frame, cfg);
  auto names = cfg.column_names();
  auto s = fit_scaler(eng, names, cfg.warmup(), train_rows);
  auto t = fit_scaler(frame, {cfg.target}, cfg.warmup(), train_rows);
  s.names.push_back(t.names[0]);
  s.min.push_back(t.min[0]);
  s.max.push_back(t.max[0]);
  return s;
}

/// Scaled model inputs. Row r corresponds to raw frame row r + first_raw_row.
struct FeatureMatrix {
  std::vector<Instant> timestamps;
  std::vector<std::string> columns;
  std::vector<double> values;  // rows x cols, row-major
  std::size_t warmup_rows = 0;
  std::size_t first_raw_row = 0;
  bool out_of_range = false;  // some value falls outside the training [0, 1] range

  std::size_t rows() const { return timestamps.size(); }
  std::size_t dim() const { return columns.size(); }
  std::span<const double> row(std::size_t r) const { return {values.data() + r * dim(), dim()}; }
  double at(std::size_t r, std::size_t c) const { return values[r * dim() + c]; }
};

/// Scales already-engineered rows [first, last) of `eng` into a matrix.
inline FeatureMatrix scale_engineered(const TimeSeriesFrame& eng, const FeatureConfig& cfg, const ScalerState& scaler,
                                      std::size_t first, std::size_t last) {
  FeatureMatrix m;
  m.columns = cfg.column_names();
  m.warmup_rows = cfg.warmup();
  m.first_raw_row = first;
  auto ts = eng.timestamps();
  m.timestamps.assign(ts.begin() + static_cast<std::ptrdiff_t>(first), ts.begin() + static_cast<std::ptrdiff_t>(last));
  const auto d = m.columns.size();
  m.values.resize((last - first) * d);
  for (std::size_t c = 0; c < d; ++c) {
    auto src = eng.column(c);
    auto si = scaler.index(m.columns[c]);
    for (std::size_t r = first; r < last; ++r) {
      double v = scaler.scale(si, src[r]);
      if (v < 0.0 || v > 1.0) m.out_of_range = true;
      m.values[(r - first) * d + c] = v;
    }
  }
  return m;
}

/// Raw + lag + rolling columns, scaled, with warm-up rows dropped.
inline FeatureMatrix build_matrix(const TimeSeriesFrame& frame, const FeatureConfig& cfg, const ScalerState& scaler) {
  auto eng = engineer(frame, cfg);
  auto first = cfg.warmup();
  if (first >= frame.rows()) throw Error(ErrorKind::InsufficientData, "frame shorter than the feature warm-up");
  auto m = scale_engineered(eng, cfg, scaler, first, frame.rows());
  for (double v : m.values)
    if (is_missing(v)) throw Error(ErrorKind::InvalidArgument, "feature matrix contains missing values; fill first");
  return m;
}

/// Scaled target aligned with the matrix rows.
inline std::vector<double> scaled_target(const TimeSeriesFrame& frame, const FeatureMatrix& m,
                                         const FeatureConfig& cfg, const ScalerState& scaler) {
  auto y = frame.column(cfg.target);
  auto si = scaler.index(cfg.target);
  std::vector<double> out(m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r) out[r] = scaler.scale(si, y[r + m.first_raw_row]);
  return out;
}

inline TimeSeriesFrame to_frame(const FeatureMatrix& m, std::int64_t interval_s) {
  std::vector<TimeSeriesFrame::Column> cols;
  for (std::size_t c = 0; c < m.dim(); ++c) {
    std::vector<double> v(m.rows());
    for (std::size_t r = 0; r < m.rows(); ++r) v[r] = m.at(r, c);
    cols.push_back({m.columns[c], std::move(v)});
  }
  return TimeSeriesFrame(m.timestamps, std::move(cols), interval_s, "features");
}

/// Stride-1 supervised windows: sample i is matrix rows [i, i + W) paired with
/// the target at row i + W. Subsets share storage.
class WindowedDataset {
 public:
  WindowedDataset() = default;

  WindowedDataset(const FeatureMatrix& m, std::vector<double> target, std::size_t window)
      : features_(std::make_shared<const std::vector<double>>(m.values)),
        targets_(std::make_shared<const std::vector<double>>(std::move(target))),
        times_(std::make_shared<const std::vector<Instant>>(m.timestamps)),
        dim_(m.dim()),
        window_(window) {
    if (window < 1) throw Error(ErrorKind::InvalidArgument, "window must be >= 1");
    if (targets_->size() != m.rows()) throw Error(ErrorKind::ShapeMismatch, "target length differs from matrix rows");
    if (m.rows() < window + 1)
      throw Error(ErrorKind::InsufficientData, "need at least W + 1 = " + std::to_string(window + 1) + " rows, have " +
                                                   std::to_string(m.rows()));
    count_ = m.rows() - window;
  }

  std::size_t size() const noexcept { return count_; }
  bool empty() const noexcept { return count_ == 0; }
  std::size_t dim() const noexcept { return dim_; }
  std::size_t window() const noexcept { return window_; }

  /// W consecutive feature rows, row-major (W x d).
  std::span<const double> inputs(std::size_t i) const {
    return {features_->data() + (first_ + i) * dim_, window_ * dim_};
  }
  double target(std::size_t i) const { return (*targets_)[first_ + i + window_]; }
  Instant target_time(std::size_t i) const { return (*times_)[first_ + i + window_]; }
  /// Matrix row index of the target of sample i.
  std::size_t target_row(std::size_t i) const { return first_ + i + window_; }

  /// Samples [begin, end) of this dataset.
  WindowedDataset subset(std::size_t begin, std::size_t end) const {
    if (begin > end || end > count_) throw Error(ErrorKind::InvalidArgument, "subset out of range");
    WindowedDataset out = *this;
    out.first_ = first_ + begin;
    out.count_ = end - begin;
    return out;
  }

 private:
  std::shared_ptr<const std::vector<double>> features_;
  std::shared_ptr<const std::vector<double>> targets_;
  std::shared_ptr<const std::vector<Instant>> times_;
  std::size_t dim_ = 0;
  std::size_t window_ = 0;
  std::size_t first_ = 0;
  std::size_t count_ = 0;
};

inline WindowedDataset window(const FeatureMatrix& m, std::vector<double> target, std::size_t w) {
  return WindowedDataset(m, std::move(target), w);
}

}  // namespace ccf
