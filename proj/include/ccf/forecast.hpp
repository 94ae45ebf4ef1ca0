#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "ccf/ingest.hpp"
#include "ccf/training.hpp"

namespace ccf {

enum class ForecastMode { Exogenous, Autoregressive };

inline std::string to_string(ForecastMode m) { return m == ForecastMode::Exogenous ? "exogenous" : "autoregressive"; }

inline ForecastMode parse_forecast_mode(std::string_view s) {
  if (s == "exogenous") return ForecastMode::Exogenous;
  if (s == "autoregressive") return ForecastMode::Autoregressive;
  throw Error(ErrorKind::InvalidArgument, "unknown forecast mode '" + std::string(s) + "'");
}

/// Predict raw rows [start, start + horizon) of the dataset.
struct ForecastRequest {
  std::size_t start = 0;
  std::size_t horizon = 1;
  ForecastMode mode = ForecastMode::Exogenous;
};

struct ForecastResult {
  std::vector<Instant> timestamps;
  std::vector<double> predicted;        // original units
  std::vector<std::optional<double>> actual;
  std::vector<std::optional<double>> scaled_residual;  // predicted - actual, scaled units
};

/// Checks that `frame` can feed a model trained with `fc`.
inline void check_compatible(const FeatureConfig& fc, const TimeSeriesFrame& frame) {
  for (const auto& c : fc.inputs)
    if (!frame.has(c)) throw Error(ErrorKind::FingerprintMismatch, "dataset lacks model input column '" + c + "'");
  if (fc.include_target_lags && !frame.has(fc.target))
    throw Error(ErrorKind::FingerprintMismatch, "dataset lacks target column '" + fc.target + "'");
  if (frame.interval_s() != fc.interval_s)
    throw Error(ErrorKind::FingerprintMismatch, "dataset interval " + std::to_string(frame.interval_s()) +
                                                    " s differs from model interval " + std::to_string(fc.interval_s) +
                                                    " s");
}

/// Earliest raw row the model can predict: warm-up plus one full window.
inline std::size_t first_forecastable_row(const FeatureConfig& fc) { return fc.warmup() + fc.window; }

namespace detail {

inline void check_request(const FeatureConfig& fc, const TimeSeriesFrame& frame, const ForecastRequest& req) {
  if (req.horizon < 1) throw Error(ErrorKind::InvalidArgument, "horizon must be >= 1");
  if (req.start < first_forecastable_row(fc))
    throw Error(ErrorKind::InvalidArgument, "start " + std::to_string(req.start) + " precedes the first forecastable row " +
                                                std::to_string(first_forecastable_row(fc)));
  if (req.start + req.horizon > frame.rows())
    throw Error(ErrorKind::InvalidArgument, "horizon runs past the end of the dataset");
  if (req.mode == ForecastMode::Autoregressive && !fc.include_target_lags)
    throw Error(ErrorKind::InvalidArgument, "autoregressive mode needs a model trained with target lags");
}

}  // namespace detail

/// Scaled predictions for raw rows [start, start + horizon) using observed
/// inputs; row t sees only feature rows t - W .. t - 1.
inline std::vector<double> predict_rows_scaled(const Model& model, const TimeSeriesFrame& frame, std::size_t start,
                                               std::size_t horizon) {
  const auto& fc = model.descriptor().features;
  const auto& scaler = model.descriptor().scaler;
  auto prefix = frame.slice(0, start + horizon - 1);
  auto eng = engineer(prefix, fc);
  const auto first = start - fc.window;
  auto m = scale_engineered(eng, fc, scaler, first, start + horizon - 1);
  const auto d = m.dim(), W = fc.window;
  for (double v : m.values)
    if (is_missing(v)) throw Error(ErrorKind::InvalidArgument, "missing values inside the forecast lookback");
  std::vector<double> windows(horizon * W * d);
  for (std::size_t s = 0; s < horizon; ++s)
    std::copy(m.values.begin() + static_cast<std::ptrdiff_t>(s * d),
              m.values.begin() + static_cast<std::ptrdiff_t>((s + W) * d),
              windows.begin() + static_cast<std::ptrdiff_t>(s * W * d));
  return model.predict(windows, horizon, W);
}

namespace detail {

/// Autoregressive rollout: target-derived feature columns are recomputed
/// from a series whose entries at rows >= start are the model's own
/// predictions.
inline std::vector<double> rollout_scaled(const Model& model, const TimeSeriesFrame& frame, std::size_t start,
                                          std::size_t horizon) {
  const auto& fc = model.descriptor().features;
  const auto& scaler = model.descriptor().scaler;
  auto prefix = frame.slice(0, start + horizon - 1);
  auto eng = engineer(prefix, fc);
  const auto names = fc.column_names();
  const auto d = names.size(), W = fc.window;
  const auto ti = scaler.index(fc.target);

  std::vector<double> series(prefix.column(fc.target).begin(), prefix.column(fc.target).end());
  series.resize(start + horizon);

  struct TargetColumn {
    std::size_t col;
    enum { Lag, Mean, Std } kind;
    std::size_t n;
    std::size_t scaler_idx;
  };
  std::vector<TargetColumn> tcols;
  for (std::size_t c = 0; c < d; ++c) {
    const auto& name = names[c];
    if (fc.lag_steps > 0 && name == lag_name(fc.target, fc.lag_steps))
      tcols.push_back({c, TargetColumn::Lag, fc.lag_steps, scaler.index(name)});
    for (auto w : fc.rolling_windows) {
      if (name == rolling_name(fc.target, w, RollingStat::Mean))
        tcols.push_back({c, TargetColumn::Mean, w, scaler.index(name)});
      if (name == rolling_name(fc.target, w, RollingStat::Std))
        tcols.push_back({c, TargetColumn::Std, w, scaler.index(name)});
    }
  }
  std::vector<std::size_t> col_scaler(d);
  for (std::size_t c = 0; c < d; ++c) col_scaler[c] = scaler.index(names[c]);

  auto target_feature = [&](const TargetColumn& tc, std::size_t row) {
    if (tc.kind == TargetColumn::Lag) return series[row - tc.n];
    double sum = 0.0;
    for (std::size_t k = row + 1 - tc.n; k <= row; ++k) sum += series[k];
    const double mean = sum / static_cast<double>(tc.n);
    if (tc.kind == TargetColumn::Mean) return mean;
    double ss = 0.0;
    for (std::size_t k = row + 1 - tc.n; k <= row; ++k) ss += (series[k] - mean) * (series[k] - mean);
    return std::sqrt(ss / static_cast<double>(tc.n - 1));
  };

  std::vector<double> out(horizon);
  std::vector<double> win(W * d);
  for (std::size_t s = 0; s < horizon; ++s) {
    const auto t = start + s;
    for (std::size_t k = 0; k < W; ++k) {
      const auto row = t - W + k;
      for (std::size_t c = 0; c < d; ++c) win[k * d + c] = scaler.scale(col_scaler[c], eng.column(c)[row]);
      if (row >= start)
        for (const auto& tc : tcols) win[k * d + tc.col] = scaler.scale(tc.scaler_idx, target_feature(tc, row));
    }
    const double y = model.predict(win, 1, W)[0];
    if (!std::isfinite(y)) throw Error(ErrorKind::Divergence, "non-finite prediction at step " + std::to_string(s));
    out[s] = y;
    series[t] = scaler.invert(ti, y);
  }
  return out;
}

}  // namespace detail

/// Multi-step forecast in original units.
inline ForecastResult forecast(const Model& model, const TimeSeriesFrame& frame, const ForecastRequest& req) {
  const auto& fc = model.descriptor().features;
  check_compatible(fc, frame);
  detail::check_request(fc, frame, req);
  auto scaled = req.mode == ForecastMode::Exogenous ? predict_rows_scaled(model, frame, req.start, req.horizon)
                                                    : detail::rollout_scaled(model, frame, req.start, req.horizon);
  const auto& scaler = model.descriptor().scaler;
  const auto ti = scaler.index(fc.target);
  ForecastResult r;
  auto ts = frame.timestamps();
  const bool has_actual = frame.has(fc.target);
  for (std::size_t s = 0; s < req.horizon; ++s) {
    const auto t = req.start + s;
    r.timestamps.push_back(ts[t]);
    r.predicted.push_back(scaler.invert(ti, scaled[s]));
    std::optional<double> a;
    if (has_actual && !is_missing(frame.column(fc.target)[t])) a = frame.column(fc.target)[t];
    r.actual.push_back(a);
    r.scaled_residual.push_back(a ? std::optional<double>(scaled[s] - scaler.scale(ti, *a)) : std::nullopt);
  }
  return r;
}

struct HorizonReport {
  std::size_t horizon = 0;
  MetricsReport metrics;
};

/// Metrics over the leading `h` steps of one forecast from `start`, for each
/// requested horizon.
inline std::vector<HorizonReport> horizon_degradation(const Model& model, const TimeSeriesFrame& frame,
                                                      std::size_t start, const std::vector<std::size_t>& horizons,
                                                      ForecastMode mode = ForecastMode::Exogenous) {
  std::size_t longest = 0;
  for (auto h : horizons) longest = std::max(longest, h);
  auto fr = forecast(model, frame, {start, longest, mode});
  std::vector<HorizonReport> out;
  const auto& fc = model.descriptor().features;
  for (auto h : horizons) {
    std::vector<double> pred(fr.predicted.begin(), fr.predicted.begin() + static_cast<std::ptrdiff_t>(h));
    std::vector<double> act;
    for (std::size_t i = 0; i < h; ++i) {
      if (!fr.actual[i]) throw Error(ErrorKind::InsufficientData, "actual values missing inside the horizon");
      act.push_back(*fr.actual[i]);
    }
    out.push_back({h, metrics(pred, act, model.descriptor().scaler, fc.target)});
  }
  return out;
}

/// Steps per day at the given cadence.
inline std::size_t steps_per_day(std::int64_t interval_s) { return static_cast<std::size_t>(86400 / interval_s); }

inline void write_forecast_csv(std::ostream& out, const ForecastResult& r) {
  out << "timestamp,predicted,actual\n";
  for (std::size_t i = 0; i < r.predicted.size(); ++i)
    out << format_iso8601(r.timestamps[i]) << ',' << format_double(r.predicted[i]) << ','
        << (r.actual[i] ? format_double(*r.actual[i]) : std::string()) << '\n';
}

}  // namespace ccf
