#pragma once

#include <string>

#include "ccf/forecast.hpp"
#include "ccf/ingest.hpp"

namespace ccf {

/// Engineered, scaled, windowed data for one target with chronological
/// train / validation / test sample sets.
struct PreparedData {
  FeatureConfig features;
  ScalerState scaler;
  FeatureMatrix matrix;
  WindowedDataset all;
  WindowedDataset train;
  WindowedDataset val;
  WindowedDataset test;
  std::size_t train_end = 0;  // raw rows [0, train_end) are training data
  std::size_t val_end = 0;    // raw rows [train_end, val_end) are validation data
};

/// Scaler fitted on raw rows [0, train_end); samples assigned to a segment by
/// the raw row of their target.
inline PreparedData prepare(const TimeSeriesFrame& frame, const FeatureConfig& fc, std::size_t train_end,
                            std::size_t val_end) {
  fc.validate();
  if (!(train_end < val_end && val_end < frame.rows()))
    throw Error(ErrorKind::InvalidArgument, "segment boundaries must satisfy train_end < val_end < rows");
  const auto min_rows = fc.warmup() + fc.window + 1;
  if (train_end < min_rows) throw Error(ErrorKind::SplitTooSmall, "training segment shorter than warm-up + window");
  PreparedData p;
  p.features = fc;
  p.train_end = train_end;
  p.val_end = val_end;
  p.scaler = fit_feature_scaler(frame, fc, train_end);
  p.matrix = build_matrix(frame, fc, p.scaler);
  p.all = window(p.matrix, scaled_target(frame, p.matrix, fc, p.scaler), fc.window);
  p.train = samples_with_targets_in(p.all, p.matrix, 0, train_end);
  p.val = samples_with_targets_in(p.all, p.matrix, train_end, val_end);
  p.test = samples_with_targets_in(p.all, p.matrix, val_end, frame.rows());
  if (p.train.empty() || p.val.empty() || p.test.empty())
    throw Error(ErrorKind::SplitTooSmall, "a split segment has no complete windows");
  return p;
}

inline PreparedData prepare(const TimeSeriesFrame& frame, const FeatureConfig& fc, SplitFractions f = {}) {
  auto [n_train, n_val, n_test] = split_lengths(frame.rows(), f);
  if (n_val < 1 || n_test < 1) throw Error(ErrorKind::SplitTooSmall, "empty validation or test segment");
  return prepare(frame, fc, n_train, n_train + n_val);
}

/// Architecture knobs applied on top of a prepared dataset.
struct ArchitectureSpec {
  Architecture architecture = Architecture::Basic;
  std::size_t hidden = 32;
  std::size_t layers = 1;
  std::size_t kernel = 3;
};

inline ModelDescriptor make_descriptor(const PreparedData& p, const ArchitectureSpec& a) {
  ModelDescriptor d;
  d.architecture = a.architecture;
  d.hidden = a.hidden;
  d.layers = a.architecture == Architecture::Stacked ? std::max<std::size_t>(a.layers, 2) : 1;
  d.kernel = a.kernel;
  d.features = p.features;
  d.scaler = p.scaler;
  d.input_dim = p.matrix.dim();
  return d;
}

struct PipelineResult {
  TrainResult result;
  MetricsReport test_metrics;
  ForecastResult test_forecast;
};

/// Trains on the prepared split and scores an exogenous forecast over the
/// whole test segment.
inline PipelineResult train_and_evaluate(const TimeSeriesFrame& frame, const PreparedData& p, const ArchitectureSpec& a,
                                         const TrainConfig& cfg, std::ostream* log = nullptr) {
  PipelineResult out;
  out.result = fit(make_descriptor(p, a), p.train, p.val, cfg, log);
  auto ts = frame.timestamps();
  out.result.trained.meta.data_start = ts.front();
  out.result.trained.meta.data_end = ts[p.val_end - 1];
  out.test_forecast =
      forecast(out.result.trained.model, frame, {p.val_end, frame.rows() - p.val_end, ForecastMode::Exogenous});
  std::vector<double> act;
  for (const auto& a_opt : out.test_forecast.actual) act.push_back(a_opt.value_or(kMissing));
  out.test_metrics = metrics(out.test_forecast.predicted, act, p.scaler, p.features.target);
  return out;
}

}  // namespace ccf
