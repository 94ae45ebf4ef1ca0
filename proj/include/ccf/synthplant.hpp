#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ccf/frame.hpp"
#include "ccf/schema.hpp"

namespace ccf::synth {

/// x(t) = base * (1 + amplitude * sin(2*pi*t / period) + eps(t)),
/// eps(t) = rho * eps(t-1) + ar_sigma * N(0, 1), eps(0) = 0.
struct InputProcess {
  std::string name;
  double base = 1.0;
  double amplitude = 0.0;
  double period_s = 86400.0;
  double ar_sigma = 0.0;
};

enum class FactorKind {
  Power,        // (x / reference)^coefficient
  Exponential,  // exp(-coefficient * (x - reference) / reference)
  Linear,       // 1 + coefficient * (x - reference) / reference
};

struct ResponseFactor {
  std::string input;
  FactorKind kind = FactorKind::Linear;
  double coefficient = 0.0;
  double reference = 1.0;
  std::int64_t delay_steps = 0;
};

/// y(t) = offset + scale * prod_j factor_j(x_j(t - delay_j)) + noise,
/// noise ~ N(0, (noise * |y at base levels|)^2).
struct OutputResponse {
  std::string name;
  double offset = 0.0;
  double scale = 1.0;
  std::vector<ResponseFactor> factors;
  double noise = 0.0;
};

struct GeneratorConfig {
  std::uint64_t seed = 0;
  std::int64_t interval_s = 300;
  double days = 23.0;
  Instant start = 1604188800;  // 2020-11-01T00:00:00Z
  double ar_rho = 0.9;
  std::vector<InputProcess> inputs;
  std::vector<OutputResponse> outputs;

  const InputProcess& input(const std::string& name) const {
    for (const auto& in : inputs)
      if (in.name == name) return in;
    throw Error(ErrorKind::UnknownName, "generator has no input '" + name + "'");
  }

  const OutputResponse& output(const std::string& name) const {
    for (const auto& out : outputs)
      if (out.name == name) return out;
    throw Error(ErrorKind::UnknownName, "generator has no output '" + name + "'");
  }

  std::size_t rows() const { return static_cast<std::size_t>(std::llround(days * 86400.0 / static_cast<double>(interval_s))); }

  void validate() const {
    if (!(days > 0)) throw Error(ErrorKind::Config, "days must be positive");
    if (interval_s <= 0) throw Error(ErrorKind::Config, "interval must be positive");
    if (!(ar_rho >= 0 && ar_rho < 1)) throw Error(ErrorKind::Config, "AR(1) coefficient must lie in [0, 1)");
    for (const auto& in : inputs) {
      if (!(in.base > 0)) throw Error(ErrorKind::Config, "input '" + in.name + "' base level must be positive");
      if (!(in.ar_sigma >= 0)) throw Error(ErrorKind::Config, "input '" + in.name + "' noise scale must be >= 0");
      if (!(in.period_s > 0)) throw Error(ErrorKind::Config, "input '" + in.name + "' period must be positive");
    }
    for (const auto& out : outputs) {
      if (!(out.noise >= 0)) throw Error(ErrorKind::Config, "output '" + out.name + "' noise must be >= 0");
      for (const auto& f : out.factors) {
        input(f.input);
        if (f.delay_steps < 0) throw Error(ErrorKind::Config, "negative transport delay");
        if (!(f.reference > 0)) throw Error(ErrorKind::Config, "factor reference must be positive");
      }
    }
  }
};

inline double factor_value(const ResponseFactor& f, double x) {
  switch (f.kind) {
    case FactorKind::Power: return std::pow(x / f.reference, f.coefficient);
    case FactorKind::Exponential: return std::exp(-f.coefficient * (x - f.reference) / f.reference);
    case FactorKind::Linear: return 1.0 + f.coefficient * (x - f.reference) / f.reference;
  }
  return 1.0;
}

/// Noise-free response; `x(input, step)` supplies input values.
inline double closed_form(const OutputResponse& out, std::size_t step,
                          const std::function<double(const std::string&, std::size_t)>& x) {
  double prod = 1.0;
  for (const auto& f : out.factors) {
    auto lagged = step >= static_cast<std::size_t>(f.delay_steps) ? step - static_cast<std::size_t>(f.delay_steps) : 0;
    prod *= factor_value(f, x(f.input, lagged));
  }
  return out.offset + out.scale * prod;
}

/// Response with every input held at its base level.
inline double steady_state(const GeneratorConfig& cfg, const OutputResponse& out) {
  return closed_form(out, 0, [&](const std::string& name, std::size_t) { return cfg.input(name).base; });
}

/// Inputs only (noise included), one vector per input in config order.
inline std::vector<std::vector<double>> generate_inputs(const GeneratorConfig& cfg) {
  const auto n = cfg.rows();
  std::vector<std::vector<double>> xs;
  for (std::size_t i = 0; i < cfg.inputs.size(); ++i) {
    const auto& in = cfg.inputs[i];
    std::mt19937_64 rng(cfg.seed * 1000003ULL + i + 1);
    std::normal_distribution<double> normal(0.0, 1.0);
    std::vector<double> v(n);
    double eps = 0.0;
    for (std::size_t t = 0; t < n; ++t) {
      if (t > 0 && in.ar_sigma > 0) eps = cfg.ar_rho * eps + in.ar_sigma * normal(rng);
      double secs = static_cast<double>(t) * static_cast<double>(cfg.interval_s);
      v[t] = in.base * (1.0 + in.amplitude * std::sin(2.0 * std::numbers::pi * secs / in.period_s) + eps);
    }
    xs.push_back(std::move(v));
  }
  return xs;
}

/// Synthetic plant telemetry: inputs followed by outputs, one row per step.
inline TimeSeriesFrame generate(const GeneratorConfig& cfg) {
  cfg.validate();
  const auto n = cfg.rows();
  auto xs = generate_inputs(cfg);
  auto lookup = [&](const std::string& name, std::size_t step) {
    for (std::size_t i = 0; i < cfg.inputs.size(); ++i)
      if (cfg.inputs[i].name == name) return xs[i][step];
    throw Error(ErrorKind::UnknownName, name);
  };

  std::vector<TimeSeriesFrame::Column> cols;
  for (std::size_t i = 0; i < cfg.inputs.size(); ++i) cols.push_back({cfg.inputs[i].name, xs[i]});
  for (std::size_t k = 0; k < cfg.outputs.size(); ++k) {
    const auto& out = cfg.outputs[k];
    std::mt19937_64 rng(cfg.seed * 1000003ULL + 500 + k);
    std::normal_distribution<double> normal(0.0, 1.0);
    double sd = out.noise * std::abs(steady_state(cfg, out));
    std::vector<double> y(n);
    for (std::size_t t = 0; t < n; ++t) {
      y[t] = closed_form(out, t, lookup);
      if (sd > 0) y[t] += sd * normal(rng);
    }
    cols.push_back({out.name, std::move(y)});
  }
  std::vector<Instant> ts(n);
  for (std::size_t t = 0; t < n; ++t) ts[t] = cfg.start + static_cast<Instant>(t) * cfg.interval_s;
  return TimeSeriesFrame(std::move(ts), std::move(cols), cfg.interval_s,
                         "synthplant:seed=" + std::to_string(cfg.seed));
}

/// Exact steady-state percent change of `output` when `feature` is scaled by
/// (1 + delta), sinusoids and noise suppressed.
inline double analytic_impact(const GeneratorConfig& cfg, const std::string& feature, double delta,
                              const std::string& output) {
  if (!(std::abs(delta) <= 0.20 + 1e-12)) throw Error(ErrorKind::InvalidArgument, "|delta| must not exceed 0.20");
  cfg.input(feature);
  const auto& out = cfg.output(output);
  double base = steady_state(cfg, out);
  double pert = closed_form(out, 0, [&](const std::string& name, std::size_t) {
    double v = cfg.input(name).base;
    return name == feature ? v * (1.0 + delta) : v;
  });
  if (std::abs(base) < 1e-300) throw Error(ErrorKind::UndefinedImpact, "steady-state output is zero");
  return 100.0 * (pert - base) / base;
}

/// CESAR1-flavoured defaults. Response signs follow the qualitative
/// directions reported for the TCM campaign; magnitudes are illustrative.
inline GeneratorConfig cesar1_defaults(std::uint64_t seed = 0, double days = 23.0) {
  using namespace columns;
  constexpr double day = 86400.0;
  constexpr std::int64_t tau = 6;  // 30 min at 300 s
  GeneratorConfig cfg;
  cfg.seed = seed;
  cfg.days = days;
  cfg.inputs = {
      {kFgInletFlow, 2000.0, 0.08, 1.0 * day, 0.004},
      {kFgInletTemp, 40.0, 0.05, 0.7 * day, 0.003},
      {kLeanSolventFlow, 6000.0, 0.06, 1.9 * day, 0.003},
      {kLeanSolventTemp, 40.0, 0.08, 1.3 * day, 0.003},
      {kUpperWwFlow, 3000.0, 0.07, 2.3 * day, 0.003},
      {kUpperWwTemp, 30.0, 0.06, 0.9 * day, 0.002},
      {kLowerWwFlow, 2500.0, 0.05, 3.1 * day, 0.003},
      {kLowerWwTemp, 32.0, 0.04, 1.6 * day, 0.003},
  };
  using K = FactorKind;
  cfg.outputs = {
      {kAmpFtir, 0.0, 2.0,
       {{kFgInletFlow, K::Power, -1.25, 2000.0, tau},
        {kLeanSolventTemp, K::Exponential, 1.5, 40.0, tau},
        {kUpperWwTemp, K::Linear, 0.8, 30.0, 0}},
       0.01},
      {kAmpImrms, 0.0, 50.0,
       {{kUpperWwTemp, K::Linear, 0.85, 30.0, tau},
        {kLowerWwFlow, K::Power, -0.6, 2500.0, tau},
        {kLeanSolventTemp, K::Exponential, -0.5, 40.0, tau}},
       0.01},
      {kPzFtir, 0.0, 0.5,
       {{kFgInletFlow, K::Power, -1.55, 2000.0, tau},
        {kLeanSolventTemp, K::Exponential, 0.7, 40.0, tau},
        {kUpperWwFlow, K::Power, -0.5, 3000.0, tau}},
       0.01},
      {kPzImrms, 0.0, 20.0,
       {{kUpperWwFlow, K::Power, -0.5, 3000.0, tau},
        {kLowerWwFlow, K::Power, -0.3, 2500.0, tau},
        {kLeanSolventTemp, K::Exponential, 0.3, 40.0, tau}},
       0.01},
      {kCo2ProductFlow, 0.0, 1500.0,
       {{kLeanSolventTemp, K::Linear, -0.1, 40.0, 0}, {kFgInletFlow, K::Power, 0.9, 2000.0, 0}},
       0.005},
      {kAbsOutletTemp, 0.0, 45.0,
       {{kLeanSolventTemp, K::Linear, 0.3, 40.0, tau}, {kFgInletTemp, K::Linear, 0.1, 40.0, tau}},
       0.002},
      {kDepletedFgTemp, 0.0, 35.0,
       {{kUpperWwTemp, K::Linear, 0.1, 30.0, tau}, {kLeanSolventTemp, K::Linear, 0.1, 40.0, tau}},
       0.002},
      {kStripperBottomTemp, 0.0, 120.0,
       {{kLeanSolventTemp, K::Linear, 0.01, 40.0, tau}, {kLeanSolventFlow, K::Linear, -0.01, 6000.0, tau}},
       0.001},
  };
  return cfg;
}

/// Defaults with `output` replaced by y(t) = slope * feature(t - delay):
/// the percent response to scaling the feature by (1 + delta) is exactly
/// 100 * delta.
inline GeneratorConfig linear_plant(std::uint64_t seed, double days, const std::string& feature,
                                    const std::string& output = columns::kAmpFtir, double slope = 2.0,
                                    double noise = 0.0) {
  auto cfg = cesar1_defaults(seed, days);
  for (auto& out : cfg.outputs)
    if (out.name == output) out = {output, 0.0, slope, {{feature, FactorKind::Power, 1.0, 1.0, 6}}, noise};
  cfg.validate();
  return cfg;
}

inline std::string to_string(FactorKind k) {
  switch (k) {
    case FactorKind::Power: return "power";
    case FactorKind::Exponential: return "exponential";
    case FactorKind::Linear: return "linear";
  }
  return "?";
}

/// Sidecar provenance: every coefficient of the generator.
inline nlohmann::json provenance_json(const GeneratorConfig& cfg) {
  nlohmann::json j;
  j["seed"] = cfg.seed;
  j["interval_s"] = cfg.interval_s;
  j["days"] = cfg.days;
  j["start"] = format_iso8601(cfg.start);
  j["ar_rho"] = cfg.ar_rho;
  j["input_form"] = "x(t) = base*(1 + amplitude*sin(2*pi*t/period) + eps(t)), eps AR(1)";
  j["output_form"] = "y(t) = offset + scale*prod(factor(x(t - delay))) + N(0, (noise*|y_base|)^2)";
  for (const auto& in : cfg.inputs)
    j["inputs"].push_back({{"name", in.name},
                           {"base", in.base},
                           {"amplitude", in.amplitude},
                           {"period_s", in.period_s},
                           {"ar_sigma", in.ar_sigma}});
  for (const auto& out : cfg.outputs) {
    nlohmann::json o{{"name", out.name}, {"offset", out.offset}, {"scale", out.scale}, {"noise", out.noise}};
    for (const auto& f : out.factors)
      o["factors"].push_back({{"input", f.input},
                              {"kind", to_string(f.kind)},
                              {"coefficient", f.coefficient},
                              {"reference", f.reference},
                              {"delay_steps", f.delay_steps}});
    j["outputs"].push_back(std::move(o));
  }
  return j;
}

}  // namespace ccf::synth
