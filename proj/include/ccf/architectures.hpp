#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <zlib.h>

#include "ccf/features.hpp"
#include "ccf/nn/cells.hpp"

namespace ccf {

enum class Architecture { Basic, Stacked, Bi, Conv };

inline std::string to_string(Architecture a) {
  switch (a) {
    case Architecture::Basic: return "lstm";
    case Architecture::Stacked: return "stackedlstm";
    case Architecture::Bi: return "bilstm";
    case Architecture::Conv: return "convlstm";
  }
  return "?";
}

inline Architecture parse_architecture(std::string_view s) {
  if (s == "lstm" || s == "basic" || s == "basiclstm") return Architecture::Basic;
  if (s == "stackedlstm" || s == "stacked") return Architecture::Stacked;
  if (s == "bilstm" || s == "bi") return Architecture::Bi;
  if (s == "convlstm" || s == "conv") return Architecture::Conv;
  throw Error(ErrorKind::UnknownName, "unknown architecture '" + std::string(s) + "'");
}

/// Architecture hyperparameters plus the feature recipe and scaler the model
/// was trained against.
struct ModelDescriptor {
  Architecture architecture = Architecture::Basic;
  std::size_t input_dim = 0;
  /// Units per LSTM layer; for Conv, hidden channels per feature position.
  std::size_t hidden = 32;
  std::size_t layers = 1;  // Stacked only, >= 2
  std::size_t kernel = 3;  // Conv only, odd
  FeatureConfig features;
  ScalerState scaler;

  const std::string& target() const { return features.target; }

  void validate() const {
    if (input_dim < 1) throw Error(ErrorKind::Config, "input_dim must be >= 1");
    if (hidden < 1) throw Error(ErrorKind::Config, "hidden must be >= 1");
    if (architecture == Architecture::Stacked && layers < 2)
      throw Error(ErrorKind::Config, "stacked LSTM needs at least 2 layers");
    if (architecture == Architecture::Conv && (kernel < 1 || kernel % 2 == 0))
      throw Error(ErrorKind::Config, "conv kernel width must be odd");
  }
};

inline constexpr std::size_t kConvInChannels = 1;

/// Closed-form trainable parameter count.
inline std::size_t param_count(const ModelDescriptor& m) {
  const auto d = m.input_dim, h = m.hidden;
  switch (m.architecture) {
    case Architecture::Basic: return 4 * h * (d + h + 1) + (h + 1);
    case Architecture::Stacked: return 4 * h * (d + h + 1) + (m.layers - 1) * 4 * h * (2 * h + 1) + (h + 1);
    case Architecture::Bi: return 8 * h * (d + h + 1) + (2 * h + 1);
    case Architecture::Conv: return 4 * h * m.kernel * (kConvInChannels + h) + 4 * h + (h + 1);
  }
  return 0;
}

/// Forecasting network: one of the four recurrent families followed by an
/// affine head producing one scalar per sample.
///
/// Parameter order (also the on-disk order):
///   Basic/Stacked: per layer W, U, b; then head.w, head.b
///   Bi:            forward W, U, b; backward W, U, b; head.w [1 x 2h], head.b
///   Conv:          Kx [4hc x kernel], Kh [4hc x kernel*hc], b [4hc]; head.w, head.b
class Model {
 public:
  Model() = default;

  Model(ModelDescriptor d, std::uint64_t seed) : desc_(std::move(d)) {
    desc_.validate();
    std::mt19937_64 rng(seed);
    allocate();
    initialize(rng);
  }

  Model(ModelDescriptor d, nn::ParameterSet params) : desc_(std::move(d)) {
    desc_.validate();
    allocate();
    if (params.size() != params_.size()) throw Error(ErrorKind::ShapeMismatch, "parameter tensor count mismatch");
    for (std::size_t k = 0; k < params.size(); ++k) {
      if (params[k].value.size() != params_[k].value.size())
        throw Error(ErrorKind::ShapeMismatch, "parameter '" + params_[k].name + "' size mismatch");
      params_[k].value.data = std::move(params[k].value.data);
    }
  }

  const ModelDescriptor& descriptor() const noexcept { return desc_; }
  nn::ParameterSet& parameters() noexcept { return params_; }
  const nn::ParameterSet& parameters() const noexcept { return params_; }
  std::size_t live_parameter_count() const { return nn::element_count(params_); }

  /// Records the forward pass for W step inputs of shape [B x d]; returns [B x 1].
  nn::Var forward(nn::Graph& g, const std::vector<nn::Var>& steps, bool trainable = true) {
    std::vector<nn::Var> p;
    p.reserve(params_.size());
    for (auto& prm : params_) p.push_back(trainable ? g.parameter(prm) : g.constant(prm.value));
    return forward_bound(g, p, steps);
  }

  /// Builds per-step [B x d] inputs from `batch` windows stored back to back
  /// (each W x d, row-major).
  static std::vector<nn::Var> step_inputs(nn::Graph& g, std::span<const double> windows, std::size_t batch,
                                          std::size_t W, std::size_t d) {
    if (windows.size() != batch * W * d) throw Error(ErrorKind::ShapeMismatch, "window buffer size mismatch");
    std::vector<nn::Var> steps;
    steps.reserve(W);
    for (std::size_t t = 0; t < W; ++t) {
      nn::Tensor x = nn::matrix(batch, d);
      for (std::size_t b = 0; b < batch; ++b)
        std::memcpy(&x.data[b * d], &windows[(b * W + t) * d], d * sizeof(double));
      steps.push_back(g.constant(std::move(x)));
    }
    return steps;
  }

  /// Scaled predictions for `batch` windows of length W.
  std::vector<double> predict(std::span<const double> windows, std::size_t batch, std::size_t W) const {
    const auto d = desc_.input_dim;
    if (windows.size() != batch * W * d)
      throw Error(ErrorKind::ShapeMismatch, "window buffer holds " + std::to_string(windows.size()) + " values, expected " +
                                                std::to_string(batch * W * d));
    std::vector<double> out;
    out.reserve(batch);
    constexpr std::size_t kChunk = 512;
    for (std::size_t first = 0; first < batch; first += kChunk) {
      const auto n = std::min(kChunk, batch - first);
      nn::Graph g(false);
      auto steps = step_inputs(g, windows.subspan(first * W * d, n * W * d), n, W, d);
      std::vector<nn::Var> p;
      for (const auto& prm : params_) p.push_back(g.constant(prm.value));
      auto y = forward_bound(g, p, steps);
      const auto& v = g.value(y).data;
      out.insert(out.end(), v.begin(), v.end());
    }
    return out;
  }

 private:
  void add(std::string name, std::vector<std::size_t> shape) { params_.emplace_back(std::move(name), nn::Tensor(std::move(shape))); }

  void allocate() {
    params_.clear();
    const auto d = desc_.input_dim, h = desc_.hidden;
    auto lstm = [&](const std::string& prefix, std::size_t in) {
      add(prefix + ".W", {4 * h, in});
      add(prefix + ".U", {4 * h, h});
      add(prefix + ".b", {4 * h});
    };
    switch (desc_.architecture) {
      case Architecture::Basic:
        lstm("lstm0", d);
        add("head.w", {1, h});
        break;
      case Architecture::Stacked:
        for (std::size_t l = 0; l < desc_.layers; ++l) lstm("lstm" + std::to_string(l), l == 0 ? d : h);
        add("head.w", {1, h});
        break;
      case Architecture::Bi:
        lstm("fwd", d);
        lstm("bwd", d);
        add("head.w", {1, 2 * h});
        break;
      case Architecture::Conv:
        add("conv.Kx", {4 * h, desc_.kernel * kConvInChannels});
        add("conv.Kh", {4 * h, desc_.kernel * h});
        add("conv.b", {4 * h});
        add("head.w", {1, h});
        break;
    }
    add("head.b", {1});
  }

  void initialize(std::mt19937_64& rng) {
    const auto h = desc_.hidden;
    std::size_t k = 0;
    auto gates = [&] {
      nn::init_gates(params_[k].value, params_[k + 1].value, params_[k + 2].value, h, rng);
      k += 3;
    };
    switch (desc_.architecture) {
      case Architecture::Basic: gates(); break;
      case Architecture::Stacked:
        for (std::size_t l = 0; l < desc_.layers; ++l) gates();
        break;
      case Architecture::Bi:
        gates();
        gates();
        break;
      case Architecture::Conv: gates(); break;
    }
    auto& w = params_[k].value;
    const double bound = 1.0 / std::sqrt(static_cast<double>(w.size()));
    std::uniform_real_distribution<double> dist(-bound, bound);
    for (auto& v : w.data) v = dist(rng);
    params_[k + 1].value[0] = 0.0;
  }

  nn::Var forward_bound(nn::Graph& g, const std::vector<nn::Var>& p, const std::vector<nn::Var>& steps) const {
    if (steps.empty()) throw Error(ErrorKind::ShapeMismatch, "empty input window");
    const auto h = desc_.hidden;
    for (auto s : steps)
      if (g.value(s).cols() != desc_.input_dim)
        throw Error(ErrorKind::ShapeMismatch, "input has " + std::to_string(g.value(s).cols()) +
                                                  " features, model expects " + std::to_string(desc_.input_dim));
    nn::Var last;
    std::size_t k = 0;
    switch (desc_.architecture) {
      case Architecture::Basic: {
        last = nn::lstm_sequence(g, {p[0], p[1], p[2], h}, steps).back();
        k = 3;
        break;
      }
      case Architecture::Stacked: {
        auto seq = steps;
        for (std::size_t l = 0; l < desc_.layers; ++l, k += 3) seq = nn::lstm_sequence(g, {p[k], p[k + 1], p[k + 2], h}, seq);
        last = seq.back();
        break;
      }
      case Architecture::Bi: {
        auto f = nn::lstm_sequence(g, {p[0], p[1], p[2], h}, steps).back();
        std::vector<nn::Var> rev(steps.rbegin(), steps.rend());
        auto b = nn::lstm_sequence(g, {p[3], p[4], p[5], h}, rev).back();
        last = g.concat_cols({f, b});
        k = 6;
        break;
      }
      case Architecture::Conv: {
        const auto P = desc_.input_dim, batch = g.value(steps[0]).rows();
        nn::ConvLstmWeights w{p[0], p[1], p[2], P, kConvInChannels, h, desc_.kernel};
        nn::LstmState s{g.zeros(batch, P * h), g.zeros(batch, P * h)};
        for (auto x : steps) s = nn::conv_lstm_cell_step(g, w, x, s);
        last = g.mean_positions(s.h, P, h);
        k = 3;
        break;
      }
    }
    return g.add_bias(g.matmul_nt(last, p[k]), p[k + 1]);
  }

  ModelDescriptor desc_;
  nn::ParameterSet params_;
};

struct TrainingMetadata {
  std::uint64_t seed = 0;
  std::size_t epochs_run = 0;
  double best_val_loss = 0.0;
  Instant data_start = 0;
  Instant data_end = 0;
  std::string dataset_id;
};

struct TrainedModel {
  Model model;
  TrainingMetadata meta;
};

// ---------------------------------------------------------------------------
// Descriptor text form

inline nlohmann::json to_json(const FeatureConfig& c) {
  nlohmann::json stats = nlohmann::json::array();
  for (auto s : c.rolling_stats) stats.push_back(to_string(s));
  return {{"inputs", c.inputs},
          {"target", c.target},
          {"lag_steps", c.lag_steps},
          {"rolling_windows", c.rolling_windows},
          {"rolling_stats", stats},
          {"include_target_lags", c.include_target_lags},
          {"window", c.window},
          {"interval_s", c.interval_s},
          {"strict_cadence", c.strict_cadence}};
}

inline FeatureConfig feature_config_from_json(const nlohmann::json& j) {
  FeatureConfig c;
  c.inputs = j.at("inputs").get<std::vector<std::string>>();
  c.target = j.at("target").get<std::string>();
  c.lag_steps = j.at("lag_steps").get<std::size_t>();
  c.rolling_windows = j.at("rolling_windows").get<std::vector<std::size_t>>();
  c.rolling_stats.clear();
  for (const auto& s : j.at("rolling_stats"))
    c.rolling_stats.push_back(s.get<std::string>() == "rmean" ? RollingStat::Mean : RollingStat::Std);
  c.include_target_lags = j.at("include_target_lags").get<bool>();
  c.window = j.at("window").get<std::size_t>();
  c.interval_s = j.at("interval_s").get<std::int64_t>();
  c.strict_cadence = j.value("strict_cadence", true);
  return c;
}

inline nlohmann::json to_json(const ScalerState& s) { return {{"names", s.names}, {"min", s.min}, {"max", s.max}}; }

inline ScalerState scaler_from_json(const nlohmann::json& j) {
  return {j.at("names").get<std::vector<std::string>>(), j.at("min").get<std::vector<double>>(),
          j.at("max").get<std::vector<double>>()};
}

inline nlohmann::json to_json(const ModelDescriptor& d) {
  return {{"architecture", to_string(d.architecture)},
          {"input_dim", d.input_dim},
          {"hidden", d.hidden},
          {"layers", d.layers},
          {"kernel", d.kernel},
          {"features", to_json(d.features)},
          {"feature_fingerprint", d.features.fingerprint()},
          {"scaler", to_json(d.scaler)}};
}

inline ModelDescriptor descriptor_from_json(const nlohmann::json& j) {
  ModelDescriptor d;
  d.architecture = parse_architecture(j.at("architecture").get<std::string>());
  d.input_dim = j.at("input_dim").get<std::size_t>();
  d.hidden = j.at("hidden").get<std::size_t>();
  d.layers = j.at("layers").get<std::size_t>();
  d.kernel = j.at("kernel").get<std::size_t>();
  d.features = feature_config_from_json(j.at("features"));
  d.scaler = scaler_from_json(j.at("scaler"));
  return d;
}

inline nlohmann::json to_json(const TrainingMetadata& m) {
  return {{"seed", m.seed},
          {"epochs_run", m.epochs_run},
          {"best_val_loss", m.best_val_loss},
          {"data_start", m.data_start},
          {"data_end", m.data_end},
          {"dataset_id", m.dataset_id}};
}

inline TrainingMetadata metadata_from_json(const nlohmann::json& j) {
  TrainingMetadata m;
  m.seed = j.at("seed").get<std::uint64_t>();
  m.epochs_run = j.at("epochs_run").get<std::size_t>();
  m.best_val_loss = j.at("best_val_loss").get<double>();
  m.data_start = j.at("data_start").get<Instant>();
  m.data_end = j.at("data_end").get<Instant>();
  m.dataset_id = j.at("dataset_id").get<std::string>();
  return m;
}

// ---------------------------------------------------------------------------
// Model file
//
//   magic "CCFMODEL" | u32 version | u64 total file bytes | u64 text bytes |
//   descriptor + metadata JSON text | u64 weight count | f64 weights (LE,
//   parameter order above) | u32 CRC-32 of every preceding byte

inline constexpr char kModelMagic[8] = {'C', 'C', 'F', 'M', 'O', 'D', 'E', 'L'};
inline constexpr std::uint32_t kModelFormatVersion = 1;

namespace detail {
static_assert(std::endian::native == std::endian::little, "model files are written little-endian");

template <class T>
void put(std::string& buf, T v) {
  char raw[sizeof(T)];
  std::memcpy(raw, &v, sizeof(T));
  buf.append(raw, sizeof(T));
}

template <class T>
T get(const std::string& buf, std::size_t& pos) {
  if (pos + sizeof(T) > buf.size()) throw Error(ErrorKind::Truncated, "model file ends early");
  T v;
  std::memcpy(&v, buf.data() + pos, sizeof(T));
  pos += sizeof(T);
  return v;
}
}  // namespace detail

inline std::string serialize(const TrainedModel& tm, std::uint32_t version = kModelFormatVersion) {
  for (const auto& p : tm.model.parameters())
    for (double v : p.value.data)
      if (!std::isfinite(v)) throw Error(ErrorKind::InvalidArgument, "refusing to save non-finite weights");
  nlohmann::json j{{"descriptor", to_json(tm.model.descriptor())}, {"metadata", to_json(tm.meta)}};
  const std::string text = j.dump();
  std::string buf(kModelMagic, sizeof kModelMagic);
  detail::put<std::uint32_t>(buf, version);
  const auto total_pos = buf.size();
  detail::put<std::uint64_t>(buf, 0);
  detail::put<std::uint64_t>(buf, text.size());
  buf += text;
  detail::put<std::uint64_t>(buf, tm.model.live_parameter_count());
  for (const auto& p : tm.model.parameters())
    for (double v : p.value.data) detail::put<double>(buf, v);
  const std::uint64_t total = buf.size() + sizeof(std::uint32_t);
  std::memcpy(buf.data() + total_pos, &total, sizeof total);
  auto crc = static_cast<std::uint32_t>(::crc32(0L, reinterpret_cast<const Bytef*>(buf.data()), static_cast<uInt>(buf.size())));
  detail::put<std::uint32_t>(buf, crc);
  return buf;
}

inline TrainedModel deserialize(const std::string& buf) {
  constexpr std::size_t header = sizeof kModelMagic + sizeof(std::uint32_t) + sizeof(std::uint64_t);
  if (buf.size() < header + sizeof(std::uint32_t)) throw Error(ErrorKind::Truncated, "model file too short");
  if (std::memcmp(buf.data(), kModelMagic, sizeof kModelMagic) != 0)
    throw Error(ErrorKind::Version, "not a model file (bad magic)");
  std::size_t pos = sizeof kModelMagic;
  const auto version = detail::get<std::uint32_t>(buf, pos);
  const auto total = detail::get<std::uint64_t>(buf, pos);
  if (total > buf.size()) throw Error(ErrorKind::Truncated, "model file is shorter than its recorded length");
  const auto body = buf.size() - sizeof(std::uint32_t);
  std::uint32_t stored;
  std::memcpy(&stored, buf.data() + body, sizeof stored);
  auto crc = static_cast<std::uint32_t>(::crc32(0L, reinterpret_cast<const Bytef*>(buf.data()), static_cast<uInt>(body)));
  if (total != buf.size() || crc != stored) throw Error(ErrorKind::Checksum, "model file checksum mismatch");
  if (version != kModelFormatVersion)
    throw Error(ErrorKind::Version, "unsupported model format version " + std::to_string(version));

  const auto text_len = detail::get<std::uint64_t>(buf, pos);
  if (pos + text_len > body) throw Error(ErrorKind::Truncated, "descriptor text runs past end of file");
  auto j = nlohmann::json::parse(buf.begin() + static_cast<std::ptrdiff_t>(pos),
                                 buf.begin() + static_cast<std::ptrdiff_t>(pos + text_len));
  pos += text_len;
  auto desc = descriptor_from_json(j.at("descriptor"));
  auto meta = metadata_from_json(j.at("metadata"));
  const auto count = detail::get<std::uint64_t>(buf, pos);
  if (count != param_count(desc)) throw Error(ErrorKind::ShapeMismatch, "weight count does not match descriptor");
  Model shape_only(desc, 0);
  nn::ParameterSet params = shape_only.parameters();
  for (auto& p : params)
    for (auto& v : p.value.data) v = detail::get<double>(buf, pos);
  if (pos != body) throw Error(ErrorKind::Truncated, "unexpected bytes after weights");
  return {Model(std::move(desc), std::move(params)), std::move(meta)};
}

inline void save(const TrainedModel& tm, const std::string& path) {
  auto bytes = serialize(tm);
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::Io, "cannot write '" + path + "'");
  out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
}

inline TrainedModel load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorKind::Io, "cannot open '" + path + "'");
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

}  // namespace ccf
