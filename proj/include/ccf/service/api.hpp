#pragma once

#include <map>
#include <memory>
#include <mutex>
#include <string>

#include <nlohmann/json.hpp>

#include "ccf/causal.hpp"
#include "ccf/forecast.hpp"
#include "ccf/service/registry.hpp"

namespace ccf::service {

using nlohmann::json;

inline constexpr const char* kApiPrefix = "/api/v1/";
inline constexpr std::size_t kMaxSweepCells = 81;

struct Response {
  int status = 200;
  json body;
};

/// A request error with an HTTP status and, for validation failures, the
/// path of the offending request field.
struct ApiError : std::runtime_error {
  int status;
  std::string code;
  std::string field;
  ApiError(int status, std::string code, const std::string& message, std::string field = {})
      : std::runtime_error(message), status(status), code(std::move(code)), field(std::move(field)) {}
};

inline json error_body(const std::string& code, const std::string& message, const std::string& field = {}) {
  json e{{"code", code}, {"message", message}};
  e["field"] = field.empty() ? json(nullptr) : json(field);
  return {{"error", e}};
}

inline int status_for(ErrorKind k) {
  switch (k) {
    case ErrorKind::NotFound: return 404;
    case ErrorKind::FingerprintMismatch: return 409;
    case ErrorKind::Checksum:
    case ErrorKind::Truncated:
    case ErrorKind::Version:
    case ErrorKind::Io: return 500;
    default: return 422;
  }
}

inline json to_json(const DatasetEntry& d) {
  return {{"id", d.id},
          {"interval_s", d.interval_s},
          {"start", format_iso8601(d.start)},
          {"end", format_iso8601(d.end)},
          {"rows", d.rows},
          {"provenance", d.provenance}};
}

inline json to_json(const ModelEntry& m) {
  return {{"id", m.id},
          {"dataset_id", m.dataset_id},
          {"target", m.target},
          {"architecture", m.architecture},
          {"fingerprint", m.fingerprint},
          {"param_count", m.param_count},
          {"metrics", m.metrics}};
}

namespace detail {

inline json timestamps_json(std::span<const Instant> ts) {
  json out = json::array();
  for (auto t : ts) out.push_back(format_iso8601(t));
  return out;
}

inline json optional_series(const std::vector<std::optional<double>>& v) {
  json out = json::array();
  for (const auto& x : v) out.push_back(x ? json(*x) : json(nullptr));
  return out;
}

inline const json& require(const json& body, const std::string& key, const std::string& path) {
  if (!body.contains(key)) throw ApiError(422, "missing_field", "request lacks '" + path + "'", path);
  return body.at(key);
}

inline std::string require_string(const json& body, const std::string& key) {
  const auto& v = require(body, key, key);
  if (!v.is_string()) throw ApiError(422, "invalid_field", "'" + key + "' must be a string", key);
  return v.get<std::string>();
}

inline std::size_t as_index(const json& v, const std::string& path) {
  if (!v.is_number_integer() || v.get<std::int64_t>() < 0)
    throw ApiError(422, "invalid_field", "'" + path + "' must be a non-negative integer", path);
  return v.get<std::size_t>();
}

inline double as_number(const json& v, const std::string& path) {
  if (!v.is_number()) throw ApiError(422, "invalid_field", "'" + path + "' must be a number", path);
  return v.get<double>();
}

}  // namespace detail

/// Request handlers over a registry. Each handler is a pure function of the
/// registry contents and the request body; loaded datasets and models are
/// cached by id (ids are never reused).
class Api {
 public:
  explicit Api(std::shared_ptr<Registry> registry) : registry_(std::move(registry)) {}

  Registry& registry() { return *registry_; }

  /// Dispatches `METHOD path` with a raw JSON body.
  Response handle(const std::string& method, const std::string& path, const std::string& body) {
    try {
      const std::string prefix = kApiPrefix;
      if (path.rfind(prefix, 0) != 0) throw ApiError(404, "not_found", "no route for '" + path + "'");
      const auto route = path.substr(prefix.size());
      if (method == "GET" && route == "models") return {200, list_models()};
      if (method == "GET" && route == "datasets") return {200, list_datasets()};
      if (method == "POST" && (route == "forecast" || route == "whatif" || route == "sweep")) {
        json req;
        try {
          req = json::parse(body);
        } catch (const json::parse_error& e) {
          throw ApiError(400, "bad_request", std::string("request body is not valid JSON: ") + e.what());
        }
        if (!req.is_object()) throw ApiError(400, "bad_request", "request body must be a JSON object");
        if (route == "forecast") return {200, post_forecast(req)};
        if (route == "whatif") return {200, post_whatif(req)};
        return {200, post_sweep(req)};
      }
      if (route == "models" || route == "datasets" || route == "forecast" || route == "whatif" || route == "sweep")
        throw ApiError(405, "method_not_allowed", method + " not supported on '" + path + "'");
      throw ApiError(404, "not_found", "no route for '" + path + "'");
    } catch (const ApiError& e) {
      return {e.status, error_body(e.code, e.what(), e.field)};
    } catch (const Error& e) {
      return {status_for(e.kind()), error_body(std::string(to_string(e.kind())), e.what())};
    } catch (const std::exception& e) {
      return {500, error_body("internal", e.what())};
    }
  }

  json list_models() const {
    json out = json::array();
    for (const auto& m : registry_->models()) out.push_back(to_json(m));
    return {{"models", out}};
  }

  json list_datasets() const {
    json out = json::array();
    for (const auto& d : registry_->datasets()) out.push_back(to_json(d));
    return {{"datasets", out}};
  }

  /// {model_id, dataset_id, horizon?, start?, mode?}
  json post_forecast(const json& req) {
    auto [model_id, dataset_id, model, frame] = resolve(req);
    const auto& fc = model->descriptor().features;
    check_compatible(fc, *frame);
    std::size_t horizon = steps_per_day(frame->interval_s());
    if (req.contains("horizon")) horizon = detail::as_index(req["horizon"], "horizon");
    if (horizon < 1) throw ApiError(422, "invalid_field", "'horizon' must be >= 1", "horizon");
    std::size_t start = frame->rows() >= horizon ? frame->rows() - horizon : 0;
    if (req.contains("start")) start = detail::as_index(req["start"], "start");
    if (start < first_forecastable_row(fc))
      throw ApiError(422, "invalid_field",
                     "'start' precedes the first forecastable row " + std::to_string(first_forecastable_row(fc)),
                     "start");
    if (start + horizon > frame->rows())
      throw ApiError(422, "invalid_field", "forecast runs past the end of the dataset", "horizon");
    auto mode = ForecastMode::Exogenous;
    if (req.contains("mode")) {
      if (!req["mode"].is_string()) throw ApiError(422, "invalid_field", "'mode' must be a string", "mode");
      try {
        mode = parse_forecast_mode(req["mode"].get<std::string>());
      } catch (const Error& e) {
        throw ApiError(422, "invalid_field", e.what(), "mode");
      }
      if (mode == ForecastMode::Autoregressive && !fc.include_target_lags)
        throw ApiError(422, "invalid_field", "model was trained without target lags", "mode");
    }
    auto r = forecast(*model, *frame, {start, horizon, mode});
    return {{"model_id", model_id},
            {"dataset_id", dataset_id},
            {"target", fc.target},
            {"mode", to_string(mode)},
            {"start", start},
            {"horizon", horizon},
            {"timestamps", detail::timestamps_json(r.timestamps)},
            {"predicted", r.predicted},
            {"actual", detail::optional_series(r.actual)}};
  }

  /// {model_id, dataset_id, window?: {start, length}, interventions: [{feature, delta_pct}]}
  json post_whatif(const json& req) {
    auto [model_id, dataset_id, model, frame] = resolve(req);
    const auto& fc = model->descriptor().features;
    check_compatible(fc, *frame);
    auto w = parse_window(req, fc, *frame);
    const auto& arr = detail::require(req, "interventions", "interventions");
    if (!arr.is_array()) throw ApiError(422, "invalid_field", "'interventions' must be a list", "interventions");
    if (arr.size() > 2)
      throw ApiError(422, "invalid_field", "at most two simultaneous interventions", "interventions");
    std::vector<Intervention> ivs;
    json echo = json::array();
    for (std::size_t i = 0; i < arr.size(); ++i) {
      const auto base = "interventions[" + std::to_string(i) + "]";
      if (!arr[i].is_object()) throw ApiError(422, "invalid_field", "'" + base + "' must be an object", base);
      const auto feature = parse_feature(detail::require(arr[i], "feature", base + ".feature"), fc, base + ".feature");
      for (const auto& prev : ivs)
        if (prev.feature == feature)
          throw ApiError(422, "invalid_field", "duplicate intervention on '" + feature + "'", base + ".feature");
      const double pct = parse_delta_pct(detail::require(arr[i], "delta_pct", base + ".delta_pct"), base + ".delta_pct");
      ivs.push_back({feature, pct / 100.0});
      echo.push_back({{"feature", feature}, {"delta_pct", pct}});
    }
    auto r = what_if(*model, *frame, ivs, w);
    return {{"model_id", model_id},
            {"dataset_id", dataset_id},
            {"target", fc.target},
            {"window", {{"start", w.start}, {"length", w.length}}},
            {"interventions", echo},
            {"timestamps", detail::timestamps_json(r.timestamps)},
            {"baseline", r.baseline},
            {"counterfactual", r.counterfactual},
            {"impact_pct", r.impact_pct}};
  }

  /// {model_id, dataset_id, window?, features?: [..] | pair: [a, b], deltas_pct?: [..]}
  json post_sweep(const json& req) {
    auto [model_id, dataset_id, model, frame] = resolve(req);
    const auto& fc = model->descriptor().features;
    check_compatible(fc, *frame);
    auto w = parse_window(req, fc, *frame);

    auto deltas = sweep_deltas();
    if (req.contains("deltas_pct")) {
      const auto& arr = req["deltas_pct"];
      if (!arr.is_array() || arr.empty())
        throw ApiError(422, "invalid_field", "'deltas_pct' must be a non-empty list", "deltas_pct");
      deltas.clear();
      for (std::size_t i = 0; i < arr.size(); ++i)
        deltas.push_back(parse_delta_pct(arr[i], "deltas_pct[" + std::to_string(i) + "]") / 100.0);
    }

    ImpactGrid g;
    if (req.contains("pair")) {
      const auto& p = req["pair"];
      if (!p.is_array() || p.size() != 2)
        throw ApiError(422, "invalid_field", "'pair' must list exactly two features", "pair");
      const auto a = parse_feature(p[0], fc, "pair[0]");
      const auto b = parse_feature(p[1], fc, "pair[1]");
      if (a == b) throw ApiError(422, "invalid_field", "pair features must differ", "pair[1]");
      check_cells(deltas.size() * deltas.size());
      g = sweep_pair(*model, *frame, a, b, w, deltas);
    } else {
      std::vector<std::string> features = fc.inputs;
      if (req.contains("features")) {
        const auto& arr = req["features"];
        if (!arr.is_array() || arr.empty())
          throw ApiError(422, "invalid_field", "'features' must be a non-empty list", "features");
        features.clear();
        for (std::size_t i = 0; i < arr.size(); ++i)
          features.push_back(parse_feature(arr[i], fc, "features[" + std::to_string(i) + "]"));
      }
      check_cells(features.size() * deltas.size());
      g = sweep_single(*model, *frame, w, features, deltas);
    }
    g.model_id = model_id;
    auto out = ccf::to_json(g);
    out["model_id"] = model_id;
    out["dataset_id"] = dataset_id;
    return out;
  }

 private:
  struct Resolved {
    std::string model_id;
    std::string dataset_id;
    std::shared_ptr<const Model> model;
    std::shared_ptr<const TimeSeriesFrame> frame;
  };

  Resolved resolve(const json& req) {
    Resolved r;
    r.model_id = detail::require_string(req, "model_id");
    r.dataset_id = detail::require_string(req, "dataset_id");
    if (!registry_->has_model(r.model_id))
      throw ApiError(404, "not_found", "unknown model '" + r.model_id + "'", "model_id");
    if (!registry_->has_dataset(r.dataset_id))
      throw ApiError(404, "not_found", "unknown dataset '" + r.dataset_id + "'", "dataset_id");
    std::lock_guard lock(cache_mu_);
    auto& m = models_[r.model_id];
    if (!m) m = std::make_shared<const Model>(registry_->open_model(r.model_id).model);
    auto& f = frames_[r.dataset_id];
    if (!f) f = std::make_shared<const TimeSeriesFrame>(registry_->open_dataset(r.dataset_id));
    r.model = m;
    r.frame = f;
    return r;
  }

  /// Defaults to the final two days of the dataset.
  static EvalWindow parse_window(const json& req, const FeatureConfig& fc, const TimeSeriesFrame& frame) {
    EvalWindow w;
    w.length = 2 * steps_per_day(frame.interval_s());
    w.start = frame.rows() >= w.length ? frame.rows() - w.length : 0;
    if (req.contains("window")) {
      const auto& j = req["window"];
      if (!j.is_object()) throw ApiError(422, "invalid_field", "'window' must be an object", "window");
      if (j.contains("length")) w.length = detail::as_index(j["length"], "window.length");
      if (j.contains("start"))
        w.start = detail::as_index(j["start"], "window.start");
      else
        w.start = frame.rows() >= w.length ? frame.rows() - w.length : 0;
    }
    if (w.length < 1) throw ApiError(422, "invalid_field", "'window.length' must be >= 1", "window.length");
    if (w.start < first_forecastable_row(fc))
      throw ApiError(422, "invalid_field",
                     "'window.start' precedes the first forecastable row " +
                         std::to_string(first_forecastable_row(fc)),
                     "window.start");
    if (w.start + w.length > frame.rows())
      throw ApiError(422, "invalid_field", "window runs past the end of the dataset", "window.length");
    return w;
  }

  static std::string parse_feature(const json& v, const FeatureConfig& fc, const std::string& path) {
    if (!v.is_string()) throw ApiError(422, "invalid_field", "'" + path + "' must be a string", path);
    auto name = v.get<std::string>();
    if (std::find(fc.inputs.begin(), fc.inputs.end(), name) == fc.inputs.end())
      throw ApiError(422, "unknown_feature", "'" + name + "' is not a model input", path);
    return name;
  }

  static double parse_delta_pct(const json& v, const std::string& path) {
    const double pct = detail::as_number(v, path);
    if (!(std::abs(pct) <= kMaxDelta * 100.0))
      throw ApiError(422, "delta_out_of_range", "'" + path + "' must lie within [-20, 20] percent", path);
    return pct;
  }

  static void check_cells(std::size_t n) {
    if (n > kMaxSweepCells)
      throw ApiError(422, "sweep_too_large",
                     "sweep of " + std::to_string(n) + " cells exceeds the cap of " + std::to_string(kMaxSweepCells),
                     "deltas_pct");
  }

  std::shared_ptr<Registry> registry_;
  std::mutex cache_mu_;
  std::map<std::string, std::shared_ptr<const Model>> models_;
  std::map<std::string, std::shared_ptr<const TimeSeriesFrame>> frames_;
};

}  // namespace ccf::service
