#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <optional>
#include <ostream>
#include <random>
#include <vector>

#include "ccf/architectures.hpp"
#include "ccf/nn/adam.hpp"

namespace ccf {

struct TrainConfig {
  std::size_t batch_size = 64;
  std::size_t max_epochs = 50;
  std::size_t patience = 5;
  double learning_rate = 1e-3;
  std::uint64_t seed = 0;
  bool deterministic = true;
  double clip_norm = 5.0;

  void validate() const {
    if (batch_size < 1) throw Error(ErrorKind::Config, "batch size must be >= 1");
    if (patience < 1) throw Error(ErrorKind::Config, "patience must be >= 1");
    if (max_epochs < 1) throw Error(ErrorKind::Config, "max epochs must be >= 1");
    if (!(learning_rate > 0)) throw Error(ErrorKind::Config, "learning rate must be positive");
  }
};

struct EpochRecord {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
};

struct TrainResult {
  TrainedModel trained;
  std::vector<EpochRecord> history;
  std::size_t best_epoch = 0;
};

/// Copies the windows of samples `idx` back to back.
inline std::vector<double> gather_windows(const WindowedDataset& ds, std::span<const std::size_t> idx) {
  const auto stride = ds.window() * ds.dim();
  std::vector<double> buf(idx.size() * stride);
  for (std::size_t b = 0; b < idx.size(); ++b) {
    auto w = ds.inputs(idx[b]);
    std::copy(w.begin(), w.end(), buf.begin() + static_cast<std::ptrdiff_t>(b * stride));
  }
  return buf;
}

inline std::vector<double> predict_dataset(const Model& model, const WindowedDataset& ds) {
  std::vector<std::size_t> idx(ds.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  return model.predict(gather_windows(ds, idx), ds.size(), ds.window());
}

/// Mean squared error of the model on a windowed set, scaled units.
inline double evaluate_mse(const Model& model, const WindowedDataset& ds) {
  auto pred = predict_dataset(model, ds);
  double s = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) s += (pred[i] - ds.target(i)) * (pred[i] - ds.target(i));
  return s / static_cast<double>(pred.size());
}

/// Minibatch Adam on scaled MSE with early stopping; the returned model holds
/// the weights of the best validation epoch. `log`, when set, receives one
/// JSON line per epoch.
inline TrainResult train(Model model, const WindowedDataset& train_set, const WindowedDataset& val_set,
                         const TrainConfig& cfg, std::ostream* log = nullptr) {
  cfg.validate();
  if (train_set.empty() || val_set.empty()) throw Error(ErrorKind::InsufficientData, "training and validation sets must be non-empty");
  const auto d = model.descriptor().input_dim;
  if (train_set.dim() != d || val_set.dim() != d)
    throw Error(ErrorKind::ShapeMismatch, "dataset has " + std::to_string(train_set.dim()) +
                                              " features, model expects " + std::to_string(d));
  if (train_set.window() != val_set.window()) throw Error(ErrorKind::ShapeMismatch, "train/val window lengths differ");

  std::mt19937_64 rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
  nn::AdamState adam;
  adam.lr = cfg.learning_rate;
  auto& params = model.parameters();

  std::vector<std::size_t> order(train_set.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto W = train_set.window();

  TrainResult result;
  double best = std::numeric_limits<double>::infinity();
  nn::ParameterSet best_params = params;
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    for (std::size_t first = 0; first < order.size(); first += cfg.batch_size) {
      const auto n = std::min(cfg.batch_size, order.size() - first);
      std::span<const std::size_t> idx(order.data() + first, n);
      std::vector<double> target(n);
      for (std::size_t b = 0; b < n; ++b) target[b] = train_set.target(idx[b]);

      nn::zero_grad(params);
      nn::Graph g;
      auto steps = Model::step_inputs(g, gather_windows(train_set, idx), n, W, d);
      auto loss = g.mse(model.forward(g, steps), target);
      const double lv = g.value(loss)[0];
      if (!std::isfinite(lv))
        throw Error(ErrorKind::Divergence, "training loss became non-finite at epoch " + std::to_string(epoch));
      g.backward(loss);
      nn::clip_grad_norm(params, cfg.clip_norm);
      nn::adam_step(adam, params);
      loss_sum += lv * static_cast<double>(n);
    }
    const double train_loss = loss_sum / static_cast<double>(order.size());
    const double val_loss = evaluate_mse(model, val_set);
    if (!std::isfinite(val_loss))
      throw Error(ErrorKind::Divergence, "validation loss became non-finite at epoch " + std::to_string(epoch));
    result.history.push_back({epoch, train_loss, val_loss});
    if (log)
      *log << nlohmann::json{{"epoch", epoch}, {"train_loss", train_loss}, {"val_loss", val_loss}}.dump() << '\n';
    if (val_loss < best) {
      best = val_loss;
      best_params = params;
      result.best_epoch = epoch;
      since_best = 0;
    } else if (++since_best >= cfg.patience) {
      break;
    }
  }
  params = best_params;
  result.trained.meta.seed = cfg.seed;
  result.trained.meta.epochs_run = result.history.size();
  result.trained.meta.best_val_loss = best;
  result.trained.model = std::move(model);
  return result;
}

/// Initializes a model from `desc` with the config seed, then trains it.
inline TrainResult fit(const ModelDescriptor& desc, const WindowedDataset& train_set, const WindowedDataset& val_set,
                       const TrainConfig& cfg, std::ostream* log = nullptr) {
  return train(Model(desc, cfg.seed), train_set, val_set, cfg, log);
}

// ---------------------------------------------------------------------------
// Metrics

struct MetricsReport {
  double mse = 0.0;
  double rmse = 0.0;
  double mae = 0.0;
  std::optional<double> mape;  // percent; undefined when some |actual| <= 1e-9
  std::optional<double> r2;    // undefined for constant actuals
  std::size_t n = 0;
};

/// MSE/RMSE/MAE on residuals mapped through the target's min-max scale;
/// MAPE and R^2 on the original scale.
inline MetricsReport metrics(std::span<const double> pred, std::span<const double> actual, double scale_min,
                             double scale_max) {
  if (pred.size() != actual.size()) throw Error(ErrorKind::ShapeMismatch, "prediction and actual lengths differ");
  if (pred.size() < 2) throw Error(ErrorKind::InsufficientData, "metrics need at least 2 points");
  const double range = scale_max - scale_min;
  if (!(range > 0)) throw Error(ErrorKind::DegenerateScale, "target scale range must be positive");
  const auto n = static_cast<double>(pred.size());
  MetricsReport r;
  r.n = pred.size();
  double ape = 0.0, mean = 0.0;
  bool mape_ok = true;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double e = (pred[i] - scale_min) / range - (actual[i] - scale_min) / range;
    r.mse += e * e;
    r.mae += std::abs(e);
    if (std::abs(actual[i]) <= 1e-9)
      mape_ok = false;
    else
      ape += std::abs(pred[i] - actual[i]) / std::abs(actual[i]);
    mean += actual[i];
  }
  r.mse /= n;
  r.mae /= n;
  r.rmse = std::sqrt(r.mse);
  if (mape_ok) r.mape = 100.0 * ape / n;
  mean /= n;
  double ss_res = 0.0, ss_tot = 0.0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    ss_res += (actual[i] - pred[i]) * (actual[i] - pred[i]);
    ss_tot += (actual[i] - mean) * (actual[i] - mean);
  }
  if (ss_tot > 0) r.r2 = 1.0 - ss_res / ss_tot;
  return r;
}

inline MetricsReport metrics(std::span<const double> pred, std::span<const double> actual, const ScalerState& scaler,
                             std::string_view target) {
  auto i = scaler.index(target);
  return metrics(pred, actual, scaler.min[i], scaler.max[i]);
}

inline nlohmann::json to_json(const MetricsReport& r) {
  nlohmann::json j{{"MSE", r.mse}, {"RMSE", r.rmse}, {"MAE", r.mae}, {"n", r.n}};
  j["MAPE"] = r.mape ? nlohmann::json(*r.mape) : nlohmann::json(nullptr);
  j["R2"] = r.r2 ? nlohmann::json(*r.r2) : nlohmann::json(nullptr);
  return j;
}

// ---------------------------------------------------------------------------
// Forward-chaining cross-validation

struct FoldBoundary {
  std::size_t train_end = 0;  // train on rows [0, train_end)
  std::size_t val_end = 0;    // validate on rows [train_end, val_end)
};

/// k expanding-window folds over `rows`: the last k blocks of size
/// rows / (2k) are validation blocks, each preceded by everything before it.
inline std::vector<FoldBoundary> forward_chain_folds(std::size_t rows, std::size_t folds, std::size_t min_rows = 1) {
  if (folds < 2) throw Error(ErrorKind::InvalidArgument, "forward-chaining CV needs at least 2 folds");
  const auto block = rows / (2 * folds);
  if (block < min_rows || block == 0)
    throw Error(ErrorKind::InsufficientData, "not enough rows for " + std::to_string(folds) + " folds");
  std::vector<FoldBoundary> out;
  const auto start = rows - folds * block;
  for (std::size_t i = 0; i < folds; ++i) out.push_back({start + i * block, start + (i + 1) * block});
  return out;
}

/// Mean of `score(fold)` over the forward-chaining folds.
inline double forward_chain_cv(std::size_t rows, std::size_t folds,
                               const std::function<double(const FoldBoundary&)>& score, std::size_t min_rows = 1) {
  auto bounds = forward_chain_folds(rows, folds, min_rows);
  std::vector<double> scores(bounds.size());
  for (std::size_t i = 0; i < bounds.size(); ++i) scores[i] = score(bounds[i]);
  return std::accumulate(scores.begin(), scores.end(), 0.0) / static_cast<double>(scores.size());
}

/// Windowed samples whose target falls on raw rows [lo, hi).
inline WindowedDataset samples_with_targets_in(const WindowedDataset& all, const FeatureMatrix& m, std::size_t lo,
                                               std::size_t hi) {
  const auto W = all.window();
  auto to_sample = [&](std::size_t raw) -> std::size_t {
    const auto first_target = m.first_raw_row + W;
    if (raw <= first_target) return 0;
    return std::min(all.size(), raw - first_target);
  };
  return all.subset(to_sample(lo), to_sample(hi));
}

/// Scaled validation MSE of an LSTM-family model under forward-chaining CV.
/// Each fold refits the scaler on its training rows and holds out the last
/// 15% of them for early stopping.
inline double lstm_cv(const TimeSeriesFrame& frame, const ModelDescriptor& templ, const TrainConfig& cfg,
                      std::size_t folds = 3) {
  const auto& fc = templ.features;
  return forward_chain_cv(
      frame.rows(), folds,
      [&](const FoldBoundary& fb) {
        auto prefix = frame.slice(0, fb.val_end);
        const auto fit_end = fc.warmup() + (fb.train_end - fc.warmup()) * 85 / 100;
        auto desc = templ;
        desc.scaler = fit_feature_scaler(prefix, fc, fit_end);
        desc.input_dim = fc.dim();
        auto m = build_matrix(prefix, fc, desc.scaler);
        auto all = window(m, scaled_target(prefix, m, fc, desc.scaler), fc.window);
        auto tr = samples_with_targets_in(all, m, 0, fit_end);
        auto es = samples_with_targets_in(all, m, fit_end, fb.train_end);
        auto va = samples_with_targets_in(all, m, fb.train_end, fb.val_end);
        auto res = fit(desc, tr, es, cfg);
        return evaluate_mse(res.trained.model, va);
      },
      fc.warmup() + fc.window + 2);
}

}  // namespace ccf
