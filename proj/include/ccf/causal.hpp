#pragma once

#include <cmath>
#include <iomanip>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ccf/forecast.hpp"
#include "ccf/ingest.hpp"

namespace ccf {

/// Multiply one raw input column by (1 + delta).
struct Intervention {
  std::string feature;
  double delta = 0.0;
};

/// Raw rows [start, start + length) over which impacts are averaged.
struct EvalWindow {
  std::size_t start = 0;
  std::size_t length = 576;  // two days at 300 s
};

inline constexpr double kMaxDelta = 0.20;

/// The nine sweep increments -20% .. +20% in 5% steps, zero included.
inline std::vector<double> sweep_deltas() {
  std::vector<double> d;
  for (int k = -4; k <= 4; ++k) d.push_back(1.0 / 20.0 * k);
  return d;
}

inline void validate_interventions(const std::vector<Intervention>& ivs, const std::vector<std::string>& inputs) {
  if (ivs.size() > 2) throw Error(ErrorKind::InvalidArgument, "at most two simultaneous interventions");
  for (std::size_t i = 0; i < ivs.size(); ++i) {
    const auto& iv = ivs[i];
    if (std::find(inputs.begin(), inputs.end(), iv.feature) == inputs.end())
      throw Error(ErrorKind::UnknownName, "'" + iv.feature + "' is not a model input");
    if (!(std::abs(iv.delta) <= kMaxDelta + 1e-12))
      throw Error(ErrorKind::InvalidArgument, "delta for '" + iv.feature + "' exceeds +/-20%");
    for (std::size_t j = 0; j < i; ++j)
      if (ivs[j].feature == iv.feature)
        throw Error(ErrorKind::InvalidArgument, "duplicate intervention on '" + iv.feature + "'");
  }
}

/// Raw rows a window's predictions depend on: the window plus the model
/// lookback and feature warm-up before it.
inline std::pair<std::size_t, std::size_t> perturbation_rows(const FeatureConfig& fc, const EvalWindow& w) {
  const auto lookback = fc.window + fc.warmup();
  return {w.start > lookback ? w.start - lookback : 0, w.start + w.length};
}

/// Scales the named raw columns by (1 + delta) over rows [first, last).
/// Zero deltas leave the frame bit-identical.
inline TimeSeriesFrame perturb(const TimeSeriesFrame& frame, const std::vector<Intervention>& ivs, std::size_t first,
                               std::size_t last) {
  if (first > last || last > frame.rows()) throw Error(ErrorKind::InvalidArgument, "perturbation range outside frame");
  for (std::size_t i = 0; i < ivs.size(); ++i)
    for (std::size_t j = 0; j < i; ++j)
      if (ivs[j].feature == ivs[i].feature)
        throw Error(ErrorKind::InvalidArgument, "duplicate intervention on '" + ivs[i].feature + "'");
  TimeSeriesFrame out = frame;
  for (const auto& iv : ivs) {
    auto src = out.column(iv.feature);
    if (iv.delta == 0.0) continue;
    std::vector<double> v(src.begin(), src.end());
    for (std::size_t r = first; r < last; ++r) v[r] *= 1.0 + iv.delta;
    out = out.with_column(iv.feature, std::move(v));
  }
  return out;
}

inline TimeSeriesFrame perturb(const TimeSeriesFrame& frame, const std::vector<Intervention>& ivs,
                               const FeatureConfig& fc, const EvalWindow& w) {
  auto [first, last] = perturbation_rows(fc, w);
  return perturb(frame, ivs, first, last);
}

/// Counterfactual pair over one evaluation window, original units.
struct WhatIfResult {
  std::vector<Instant> timestamps;
  std::vector<double> baseline;
  std::vector<double> counterfactual;
  double impact_pct = 0.0;
};

/// Model forecasts over `w` with observed inputs.
inline std::vector<double> baseline_predictions(const Model& model, const TimeSeriesFrame& frame, const EvalWindow& w) {
  auto r = forecast(model, frame, {w.start, w.length, ForecastMode::Exogenous});
  return r.predicted;
}

/// Mean over the window of 100 * (pert - base) / base.
inline double average_percent_change(const std::vector<double>& base, const std::vector<double>& pert,
                                     std::size_t first_row = 0) {
  double s = 0.0;
  for (std::size_t t = 0; t < base.size(); ++t) {
    if (!(std::abs(base[t]) > 1e-9))
      throw Error(ErrorKind::UndefinedImpact,
                  "baseline prediction is ~0 at row " + std::to_string(first_row + t) + "; percent change undefined");
    s += 100.0 * (pert[t] - base[t]) / base[t];
  }
  return s / static_cast<double>(base.size());
}

inline WhatIfResult what_if(const Model& model, const TimeSeriesFrame& frame, const std::vector<Intervention>& ivs,
                            const EvalWindow& w, const std::vector<double>* cached_baseline = nullptr) {
  const auto& fc = model.descriptor().features;
  check_compatible(fc, frame);
  validate_interventions(ivs, fc.inputs);
  WhatIfResult r;
  r.baseline = cached_baseline ? *cached_baseline : baseline_predictions(model, frame, w);
  auto pert = perturb(frame, ivs, fc, w);
  r.counterfactual = forecast(model, pert, {w.start, w.length, ForecastMode::Exogenous}).predicted;
  auto ts = frame.timestamps();
  r.timestamps.assign(ts.begin() + static_cast<std::ptrdiff_t>(w.start),
                      ts.begin() + static_cast<std::ptrdiff_t>(w.start + w.length));
  r.impact_pct = average_percent_change(r.baseline, r.counterfactual, w.start);
  return r;
}

/// Average percent change of the model's prediction under `ivs` relative to
/// its own unperturbed prediction.
inline double impact(const Model& model, const TimeSeriesFrame& frame, const std::vector<Intervention>& ivs,
                     const EvalWindow& w) {
  return what_if(model, frame, ivs, w).impact_pct;
}

/// Cells of average percent change indexed by (row, delta).
struct ImpactGrid {
  enum class Kind { Single, Pair };
  Kind kind = Kind::Single;
  std::string target;
  std::string model_id;
  EvalWindow window;
  /// Single: one feature per row. Pair: {feature_a, feature_b}; rows follow
  /// row_deltas of feature_a.
  std::vector<std::string> features;
  std::vector<double> row_deltas;  // Pair only
  std::vector<double> col_deltas;
  std::vector<std::vector<std::optional<double>>> cells;
  std::vector<std::vector<std::string>> errors;  // empty string when the cell succeeded

  std::size_t rows() const { return cells.size(); }
  std::size_t cols() const { return col_deltas.size(); }
};

namespace detail {
inline void fill_cell(ImpactGrid& g, std::size_t r, std::size_t c, const std::function<double()>& f) {
  try {
    g.cells[r][c] = f();
  } catch (const Error& e) {
    g.errors[r][c] = e.what();
  }
}

inline void shape_grid(ImpactGrid& g, std::size_t rows) {
  g.cells.assign(rows, std::vector<std::optional<double>>(g.col_deltas.size()));
  g.errors.assign(rows, std::vector<std::string>(g.col_deltas.size()));
}
}  // namespace detail

/// Features x deltas grid of single-feature impacts. `features` defaults to
/// every model input.
inline ImpactGrid sweep_single(const Model& model, const TimeSeriesFrame& frame, const EvalWindow& w,
                               std::vector<std::string> features = {}, std::vector<double> deltas = sweep_deltas()) {
  const auto& fc = model.descriptor().features;
  check_compatible(fc, frame);
  if (features.empty()) features = fc.inputs;
  ImpactGrid g;
  g.kind = ImpactGrid::Kind::Single;
  g.target = fc.target;
  g.window = w;
  g.features = std::move(features);
  g.col_deltas = std::move(deltas);
  detail::shape_grid(g, g.features.size());
  auto base = baseline_predictions(model, frame, w);
  for (std::size_t r = 0; r < g.features.size(); ++r)
    for (std::size_t c = 0; c < g.col_deltas.size(); ++c)
      detail::fill_cell(g, r, c, [&] {
        return what_if(model, frame, {{g.features[r], g.col_deltas[c]}}, w, &base).impact_pct;
      });
  return g;
}

/// Two-feature grid: rows are deltas of `feature_a`, columns deltas of
/// `feature_b`.
inline ImpactGrid sweep_pair(const Model& model, const TimeSeriesFrame& frame, const std::string& feature_a,
                             const std::string& feature_b, const EvalWindow& w,
                             std::vector<double> deltas = sweep_deltas()) {
  if (feature_a == feature_b) throw Error(ErrorKind::InvalidArgument, "pair sweep needs two distinct features");
  const auto& fc = model.descriptor().features;
  check_compatible(fc, frame);
  validate_interventions({{feature_a, 0.0}, {feature_b, 0.0}}, fc.inputs);
  ImpactGrid g;
  g.kind = ImpactGrid::Kind::Pair;
  g.target = fc.target;
  g.window = w;
  g.features = {feature_a, feature_b};
  g.row_deltas = deltas;
  g.col_deltas = std::move(deltas);
  detail::shape_grid(g, g.row_deltas.size());
  auto base = baseline_predictions(model, frame, w);
  for (std::size_t r = 0; r < g.row_deltas.size(); ++r)
    for (std::size_t c = 0; c < g.col_deltas.size(); ++c)
      detail::fill_cell(g, r, c, [&] {
        std::vector<Intervention> ivs{{feature_a, g.row_deltas[r]}, {feature_b, g.col_deltas[c]}};
        return what_if(model, frame, ivs, w, &base).impact_pct;
      });
  return g;
}

// ---------------------------------------------------------------------------
// Grid export

inline nlohmann::json to_json(const ImpactGrid& g) {
  nlohmann::json cells = nlohmann::json::array();
  for (std::size_t r = 0; r < g.rows(); ++r) {
    nlohmann::json row = nlohmann::json::array();
    for (const auto& c : g.cells[r]) row.push_back(c ? nlohmann::json(*c) : nlohmann::json(nullptr));
    cells.push_back(std::move(row));
  }
  nlohmann::json j{{"kind", g.kind == ImpactGrid::Kind::Single ? "single" : "pair"},
                   {"target", g.target},
                   {"model", g.model_id},
                   {"window", {{"start", g.window.start}, {"length", g.window.length}}},
                   {"features", g.features},
                   {"col_deltas", g.col_deltas},
                   {"cells", std::move(cells)},
                   {"errors", g.errors}};
  if (g.kind == ImpactGrid::Kind::Pair) j["row_deltas"] = g.row_deltas;
  return j;
}

inline ImpactGrid grid_from_json(const nlohmann::json& j) {
  ImpactGrid g;
  g.kind = j.at("kind").get<std::string>() == "single" ? ImpactGrid::Kind::Single : ImpactGrid::Kind::Pair;
  g.target = j.at("target").get<std::string>();
  g.model_id = j.value("model", "");
  g.window.start = j.at("window").at("start").get<std::size_t>();
  g.window.length = j.at("window").at("length").get<std::size_t>();
  g.features = j.at("features").get<std::vector<std::string>>();
  g.col_deltas = j.at("col_deltas").get<std::vector<double>>();
  if (g.kind == ImpactGrid::Kind::Pair) g.row_deltas = j.at("row_deltas").get<std::vector<double>>();
  for (const auto& row : j.at("cells")) {
    std::vector<std::optional<double>> r;
    for (const auto& c : row) r.push_back(c.is_null() ? std::nullopt : std::optional<double>(c.get<double>()));
    g.cells.push_back(std::move(r));
  }
  g.errors = j.at("errors").get<std::vector<std::vector<std::string>>>();
  return g;
}

/// CSV matrix. Header: corner label then column deltas in percent. Row labels
/// are feature names (single) or feature_a deltas in percent (pair), written to
/// 12 significant digits so -0.15 reads "-15". Cells hold shortest round-trip
/// decimals; failed cells are blank.
inline void write_grid_csv(std::ostream& out, const ImpactGrid& g) {
  auto pct = [](double d) {
    std::ostringstream s;
    s << std::setprecision(12) << d * 100.0;
    return s.str();
  };
  if (g.kind == ImpactGrid::Kind::Single)
    out << "feature\\delta_pct";
  else
    out << g.features[0] << "\\" << g.features[1];
  for (double d : g.col_deltas) out << ',' << pct(d);
  out << '\n';
  for (std::size_t r = 0; r < g.rows(); ++r) {
    out << (g.kind == ImpactGrid::Kind::Single ? g.features[r] : pct(g.row_deltas[r]));
    for (const auto& c : g.cells[r]) out << ',' << (c ? format_double(*c) : std::string());
    out << '\n';
  }
}

/// Parses a CSV written by write_grid_csv back into cells and axes; target,
/// window and error text are not part of the CSV form.
inline ImpactGrid read_grid_csv(std::istream& in) {
  ImpactGrid g;
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorKind::EmptyInput, "empty grid CSV");
  auto header = detail::split_commas(line);
  const std::string corner(header[0]);
  auto slash = corner.find('\\');
  if (slash == std::string::npos) throw Error(ErrorKind::Schema, "grid CSV corner label must be 'a\\b'");
  g.kind = corner == "feature\\delta_pct" ? ImpactGrid::Kind::Single : ImpactGrid::Kind::Pair;
  if (g.kind == ImpactGrid::Kind::Pair) g.features = {corner.substr(0, slash), corner.substr(slash + 1)};
  for (std::size_t i = 1; i < header.size(); ++i) g.col_deltas.push_back(detail::parse_cell(header[i]) / 100.0);
  while (std::getline(in, line)) {
    if (detail::trim(line).empty()) continue;
    auto f = detail::split_commas(line);
    if (f.size() != header.size()) throw Error(ErrorKind::Schema, "grid CSV row width mismatch");
    if (g.kind == ImpactGrid::Kind::Single)
      g.features.emplace_back(f[0]);
    else
      g.row_deltas.push_back(detail::parse_cell(f[0]) / 100.0);
    std::vector<std::optional<double>> row;
    for (std::size_t i = 1; i < f.size(); ++i) {
      double v = detail::parse_cell(f[i]);
      row.push_back(is_missing(v) ? std::nullopt : std::optional<double>(v));
    }
    g.cells.push_back(std::move(row));
  }
  g.errors.assign(g.cells.size(), std::vector<std::string>(g.col_deltas.size()));
  return g;
}

}  // namespace ccf
