#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <limits>
#include <map>
#include <numbers>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "ccf/architectures.hpp"

namespace ccf::hpo {

/// One search axis, explored through the unit interval.
struct Dimension {
  enum class Kind { Continuous, LogContinuous, Integer, Choice };

  std::string name;
  Kind kind = Kind::Continuous;
  double lo = 0.0;
  double hi = 1.0;
  std::vector<double> choices;  // Choice only

  static Dimension continuous(std::string n, double lo, double hi) { return {std::move(n), Kind::Continuous, lo, hi, {}}; }
  static Dimension log_uniform(std::string n, double lo, double hi) { return {std::move(n), Kind::LogContinuous, lo, hi, {}}; }
  static Dimension integer(std::string n, double lo, double hi) { return {std::move(n), Kind::Integer, lo, hi, {}}; }
  static Dimension choice(std::string n, std::vector<double> c) { return {std::move(n), Kind::Choice, 0, 0, std::move(c)}; }

  double decode(double u) const {
    u = std::clamp(u, 0.0, 1.0);
    switch (kind) {
      case Kind::Continuous: return lo + u * (hi - lo);
      case Kind::LogContinuous: return std::exp(std::log(lo) + u * (std::log(hi) - std::log(lo)));
      case Kind::Integer: return std::round(lo + u * (hi - lo));
      case Kind::Choice: {
        auto k = std::min(choices.size() - 1, static_cast<std::size_t>(u * static_cast<double>(choices.size())));
        return choices[k];
      }
    }
    return lo;
  }

  double encode(double v) const {
    switch (kind) {
      case Kind::Continuous:
      case Kind::Integer: return hi > lo ? (v - lo) / (hi - lo) : 0.0;
      case Kind::LogContinuous: return (std::log(v) - std::log(lo)) / (std::log(hi) - std::log(lo));
      case Kind::Choice: {
        for (std::size_t k = 0; k < choices.size(); ++k)
          if (choices[k] == v) return (static_cast<double>(k) + 0.5) / static_cast<double>(choices.size());
        throw Error(ErrorKind::InvalidArgument, "value not among choices of '" + name + "'");
      }
    }
    return 0.0;
  }

  void validate() const {
    if (kind == Kind::Choice) {
      if (choices.empty()) throw Error(ErrorKind::Config, "choice dimension '" + name + "' is empty");
      return;
    }
    if (!std::isfinite(lo) || !std::isfinite(hi) || !(lo <= hi))
      throw Error(ErrorKind::Config, "dimension '" + name + "' needs finite bounds lo <= hi");
    if (kind == Kind::LogContinuous && !(lo > 0)) throw Error(ErrorKind::Config, "log dimension needs lo > 0");
  }
};

using Params = std::map<std::string, double>;

struct HyperoptSpec {
  std::vector<Dimension> dims;
  std::size_t design_size = 5;
  std::size_t budget = 20;
  std::size_t candidates = 2048;
  std::uint64_t seed = 0;

  void validate() const {
    if (dims.empty()) throw Error(ErrorKind::Config, "search space is empty");
    for (const auto& d : dims) d.validate();
    if (design_size < 2) throw Error(ErrorKind::Config, "initial design needs at least 2 points");
    if (budget < design_size) throw Error(ErrorKind::Config, "budget must be at least the design size");
    if (candidates < 1024) throw Error(ErrorKind::Config, "acquisition needs at least 1024 candidates");
  }

  /// Default space for an architecture: hidden size, learning rate, batch
  /// size, plus depth (Stacked) or kernel width (Conv).
  static HyperoptSpec for_architecture(Architecture a) {
    HyperoptSpec s;
    s.dims.push_back(Dimension::integer("hidden", 16, 128));
    s.dims.push_back(Dimension::log_uniform("learning_rate", 1e-4, 1e-2));
    s.dims.push_back(Dimension::choice("batch_size", {32, 64, 128}));
    if (a == Architecture::Stacked) s.dims.push_back(Dimension::choice("layers", {2, 3}));
    if (a == Architecture::Conv) s.dims.push_back(Dimension::choice("kernel", {1, 3, 5}));
    return s;
  }
};

inline constexpr double kPenalty = 1e10;

struct Evaluation {
  std::size_t index = 0;
  Params params;
  std::vector<double> unit;  // point in [0,1]^k actually evaluated
  double objective = 0.0;
  bool penalized = false;
  double incumbent = 0.0;  // best objective so far, including this one
  bool from_design = false;
  double expected_improvement = 0.0;
  std::int64_t timestamp_ms = 0;
};

struct HyperoptResult {
  Params best;
  double best_value = std::numeric_limits<double>::infinity();
  std::vector<Evaluation> trace;
};

/// Matern-5/2 kernel with a shared lengthscale on the unit cube.
inline double matern52(const std::vector<double>& a, const std::vector<double>& b, double lengthscale) {
  double r2 = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) r2 += (a[i] - b[i]) * (a[i] - b[i]);
  const double r = std::sqrt(5.0 * r2) / lengthscale;
  return (1.0 + r + r * r / 3.0) * std::exp(-r);
}

/// Zero-mean GP regression on standardized targets. The lengthscale is the
/// maximum-marginal-likelihood member of a fixed grid.
class GaussianProcess {
 public:
  GaussianProcess(std::vector<std::vector<double>> x, const std::vector<double>& y, double noise = 1e-6)
      : x_(std::move(x)), noise_(noise) {
    const auto n = y.size();
    mean_ = 0.0;
    for (double v : y) mean_ += v;
    mean_ /= static_cast<double>(n);
    double var = 0.0;
    for (double v : y) var += (v - mean_) * (v - mean_);
    sd_ = n > 1 ? std::sqrt(var / static_cast<double>(n - 1)) : 1.0;
    if (!(sd_ > 1e-12)) sd_ = 1.0;
    y_.resize(static_cast<Eigen::Index>(n));
    for (std::size_t i = 0; i < n; ++i) y_(static_cast<Eigen::Index>(i)) = (y[i] - mean_) / sd_;

    double best_ll = -std::numeric_limits<double>::infinity();
    for (double ls : {0.05, 0.1, 0.15, 0.2, 0.3, 0.5, 0.8, 1.2}) {
      auto llt = factor(ls);
      if (llt.info() != Eigen::Success) continue;
      Eigen::VectorXd alpha = llt.solve(y_);
      double logdet = 0.0;
      const Eigen::MatrixXd& L = llt.matrixLLT();
      for (Eigen::Index i = 0; i < y_.size(); ++i) logdet += 2.0 * std::log(L(i, i));
      const double ll = -0.5 * y_.dot(alpha) - 0.5 * logdet;
      if (ll > best_ll) {
        best_ll = ll;
        lengthscale_ = ls;
        alpha_ = alpha;
        llt_ = llt;
      }
    }
    if (!std::isfinite(best_ll)) throw Error(ErrorKind::InvalidArgument, "GP kernel matrix is not positive definite");
  }

  /// Posterior mean and standard deviation in the original objective units.
  std::pair<double, double> predict(const std::vector<double>& x) const {
    const auto n = static_cast<Eigen::Index>(x_.size());
    Eigen::VectorXd k(n);
    for (Eigen::Index i = 0; i < n; ++i) k(i) = matern52(x, x_[static_cast<std::size_t>(i)], lengthscale_);
    const double mu = k.dot(alpha_);
    Eigen::VectorXd v = llt_.matrixL().solve(k);
    const double var = std::max(1.0 - v.squaredNorm(), 1e-12);
    return {mean_ + sd_ * mu, sd_ * std::sqrt(var)};
  }

  double lengthscale() const noexcept { return lengthscale_; }

 private:
  Eigen::LLT<Eigen::MatrixXd> factor(double ls) const {
    const auto n = static_cast<Eigen::Index>(x_.size());
    Eigen::MatrixXd K(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
      for (Eigen::Index j = 0; j < n; ++j)
        K(i, j) = matern52(x_[static_cast<std::size_t>(i)], x_[static_cast<std::size_t>(j)], ls) + (i == j ? noise_ : 0.0);
    return Eigen::LLT<Eigen::MatrixXd>(K);
  }

  std::vector<std::vector<double>> x_;
  Eigen::VectorXd y_;
  Eigen::VectorXd alpha_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  double noise_;
  double mean_ = 0.0;
  double sd_ = 1.0;
  double lengthscale_ = 0.2;
};

inline double normal_pdf(double z) { return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi); }
inline double normal_cdf(double z) { return 0.5 * std::erfc(-z / std::numbers::sqrt2); }

/// Expected improvement below `best` for a Gaussian posterior (minimization).
inline double expected_improvement(double mean, double sd, double best) {
  if (!(sd > 0)) return std::max(best - mean, 0.0);
  const double z = (best - mean) / sd;
  return (best - mean) * normal_cdf(z) + sd * normal_pdf(z);
}

/// Minimizes `objective` over the spec's space: a random initial design, then
/// GP-surrogate expected-improvement steps, each maximized over random
/// candidates. Non-finite objective values are recorded with kPenalty.
inline HyperoptResult bayes_opt(const std::function<double(const Params&)>& objective, const HyperoptSpec& spec) {
  spec.validate();
  const auto k = spec.dims.size();
  std::mt19937_64 rng(spec.seed);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  auto snap = [&](std::vector<double> u) {
    for (std::size_t i = 0; i < k; ++i) u[i] = spec.dims[i].encode(spec.dims[i].decode(u[i]));
    return u;
  };
  auto decode = [&](const std::vector<double>& u) {
    Params p;
    for (std::size_t i = 0; i < k; ++i) p[spec.dims[i].name] = spec.dims[i].decode(u[i]);
    return p;
  };
  auto random_point = [&] {
    std::vector<double> u(k);
    for (auto& v : u) v = unif(rng);
    return u;
  };

  HyperoptResult res;
  auto evaluate = [&](std::vector<double> u, bool design, double ei) {
    Evaluation e;
    e.index = res.trace.size();
    e.unit = std::move(u);
    e.params = decode(e.unit);
    e.from_design = design;
    e.expected_improvement = ei;
    double v = objective(e.params);
    if (!std::isfinite(v)) {
      v = kPenalty;
      e.penalized = true;
    }
    e.objective = v;
    e.timestamp_ms = std::chrono::duration_cast<std::chrono::milliseconds>(
                         std::chrono::system_clock::now().time_since_epoch())
                         .count();
    if (v < res.best_value) {
      res.best_value = v;
      res.best = e.params;
    }
    e.incumbent = res.best_value;
    res.trace.push_back(std::move(e));
  };

  for (std::size_t i = 0; i < spec.design_size; ++i) evaluate(snap(random_point()), true, 0.0);

  while (res.trace.size() < spec.budget) {
    std::vector<std::vector<double>> xs;
    std::vector<double> ys;
    double worst_finite = -std::numeric_limits<double>::infinity();
    for (const auto& e : res.trace)
      if (!e.penalized) worst_finite = std::max(worst_finite, e.objective);
    for (const auto& e : res.trace) {
      xs.push_back(e.unit);
      ys.push_back(e.penalized ? (std::isfinite(worst_finite) ? worst_finite : 0.0) : e.objective);
    }
    GaussianProcess gp(xs, ys);
    double best_ei = -1.0;
    std::vector<double> best_u;
    for (std::size_t c = 0; c < spec.candidates; ++c) {
      auto u = snap(random_point());
      auto [mu, sd] = gp.predict(u);
      double ei = expected_improvement(mu, sd, res.best_value);
      if (ei > best_ei) {
        best_ei = ei;
        best_u = std::move(u);
      }
    }
    evaluate(std::move(best_u), false, best_ei);
  }
  return res;
}

inline nlohmann::json to_json(const Evaluation& e) {
  return {{"index", e.index},         {"params", e.params},         {"objective", e.objective},
          {"penalized", e.penalized}, {"incumbent", e.incumbent},   {"from_design", e.from_design},
          {"expected_improvement", e.expected_improvement},          {"timestamp_ms", e.timestamp_ms}};
}

}  // namespace ccf::hpo
