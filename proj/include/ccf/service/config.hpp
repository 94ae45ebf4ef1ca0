#pragma once

#include <cctype>
#include <cstdlib>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "ccf/hyperopt.hpp"
#include "ccf/ingest.hpp"
#include "ccf/training.hpp"

namespace ccf::service {

/// Flat `key = value` settings. `#` starts a comment; blank lines are ignored.
/// Environment variables `CCF_<KEY>` (key upper-cased) override file values.
class Settings {
 public:
  static constexpr const char* kEnvPrefix = "CCF_";

  /// Every recognised key with its default value.
  static const std::map<std::string, std::string>& defaults() {
    static const std::map<std::string, std::string> d = {
        // TrainConfig
        {"batch_size", "64"},
        {"max_epochs", "50"},
        {"patience", "5"},
        {"learning_rate", "0.001"},
        {"seed", "0"},
        {"deterministic", "true"},
        {"clip_norm", "5"},
        // model shape
        {"hidden", "32"},
        {"layers", "2"},
        {"kernel", "3"},
        // features
        {"window", "12"},
        {"lag_steps", "12"},
        {"rolling_windows", "6,12,24,36"},
        {"include_target_lags", "false"},
        // split
        {"train_fraction", "0.7"},
        {"val_fraction", "0.15"},
        // HyperoptSpec
        {"budget", "20"},
        {"design_size", "5"},
        {"candidates", "2048"},
        {"folds", "3"},
    };
    return d;
  }

  Settings() : values_(defaults()) {}

  static Settings parse(std::istream& in) {
    Settings s;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
      ++line_no;
      if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
      auto t = ccf::detail::trim(line);
      if (t.empty()) continue;
      auto eq = t.find('=');
      if (eq == std::string_view::npos)
        throw Error(ErrorKind::Config, "config line " + std::to_string(line_no) + ": expected key = value");
      s.set(std::string(ccf::detail::trim(t.substr(0, eq))), std::string(ccf::detail::trim(t.substr(eq + 1))));
    }
    return s;
  }

  static Settings load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error(ErrorKind::Io, "cannot open config '" + path + "'");
    return parse(in);
  }

  void set(const std::string& key, const std::string& value) {
    if (!defaults().count(key)) throw Error(ErrorKind::Config, "unknown config key '" + key + "'");
    values_[key] = value;
  }

  /// Applies `CCF_<KEY>` overrides from the process environment.
  void apply_env() {
    for (const auto& [key, _] : defaults()) {
      std::string var = kEnvPrefix;
      for (char c : key) var += static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
      if (const char* v = std::getenv(var.c_str())) values_[key] = v;
    }
  }

  const std::string& str(const std::string& key) const {
    auto it = values_.find(key);
    if (it == values_.end()) throw Error(ErrorKind::Config, "unknown config key '" + key + "'");
    return it->second;
  }

  double number(const std::string& key) const {
    const auto& s = str(key);
    double v = ccf::detail::parse_cell(s);
    if (is_missing(v)) throw Error(ErrorKind::Config, "config key '" + key + "' is not a number: '" + s + "'");
    return v;
  }

  std::size_t count(const std::string& key) const {
    double v = number(key);
    if (v < 0 || v != static_cast<double>(static_cast<std::size_t>(v)))
      throw Error(ErrorKind::Config, "config key '" + key + "' must be a non-negative integer");
    return static_cast<std::size_t>(v);
  }

  bool flag(const std::string& key) const {
    const auto& s = str(key);
    if (s == "true" || s == "1" || s == "yes") return true;
    if (s == "false" || s == "0" || s == "no") return false;
    throw Error(ErrorKind::Config, "config key '" + key + "' must be true or false");
  }

  std::vector<std::size_t> counts(const std::string& key) const {
    std::vector<std::size_t> out;
    for (auto part : ccf::detail::split_commas(str(key))) {
      if (part.empty()) continue;
      double v = ccf::detail::parse_cell(part);
      if (is_missing(v) || v < 1) throw Error(ErrorKind::Config, "config key '" + key + "' must list positive integers");
      out.push_back(static_cast<std::size_t>(v));
    }
    return out;
  }

  TrainConfig train_config() const {
    TrainConfig c;
    c.batch_size = count("batch_size");
    c.max_epochs = count("max_epochs");
    c.patience = count("patience");
    c.learning_rate = number("learning_rate");
    c.seed = count("seed");
    c.deterministic = flag("deterministic");
    c.clip_norm = number("clip_norm");
    c.validate();
    return c;
  }

  /// Feature config for `target` over every schema input.
  FeatureConfig feature_config(const std::string& target, std::int64_t interval_s) const {
    FeatureConfig f;
    f.inputs = cesar1_schema().input_columns;
    f.target = target;
    f.window = count("window");
    f.lag_steps = count("lag_steps");
    f.rolling_windows = counts("rolling_windows");
    f.include_target_lags = flag("include_target_lags");
    f.interval_s = interval_s;
    f.validate();
    return f;
  }

  SplitFractions split() const {
    SplitFractions f;
    f.train = number("train_fraction");
    f.val = number("val_fraction");
    f.test = 1.0 - f.train - f.val;
    return f;
  }

  const std::map<std::string, std::string>& values() const { return values_; }

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace ccf::service
