#pragma once

#include <cmath>
#include <vector>

#include "ccf/nn/tensor.hpp"

namespace ccf::nn {

struct AdamState {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  long step = 0;
  std::vector<std::vector<double>> m;
  std::vector<std::vector<double>> v;
};

/// Bias-corrected Adam update using each parameter's accumulated gradient.
inline void adam_step(AdamState& s, ParameterSet& params) {
  if (s.m.empty()) {
    for (const auto& p : params) {
      s.m.emplace_back(p.value.size(), 0.0);
      s.v.emplace_back(p.value.size(), 0.0);
    }
  }
  if (s.m.size() != params.size()) throw Error(ErrorKind::ShapeMismatch, "Adam state does not match parameters");
  ++s.step;
  const double c1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.step));
  const double c2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.step));
  for (std::size_t k = 0; k < params.size(); ++k) {
    auto& p = params[k];
    if (s.m[k].size() != p.value.size() || p.grad.size() != p.value.size())
      throw Error(ErrorKind::ShapeMismatch, "Adam moment shape mismatch for '" + p.name + "'");
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double g = p.grad[i];
      s.m[k][i] = s.beta1 * s.m[k][i] + (1.0 - s.beta1) * g;
      s.v[k][i] = s.beta2 * s.v[k][i] + (1.0 - s.beta2) * g * g;
      const double mhat = s.m[k][i] / c1;
      const double vhat = s.v[k][i] / c2;
      p.value[i] -= s.lr * mhat / (std::sqrt(vhat) + s.eps);
    }
  }
}

/// Rescales all gradients so their global L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
inline double clip_grad_norm(ParameterSet& params, double max_norm) {
  double sq = 0.0;
  for (const auto& p : params)
    for (double g : p.grad.data) sq += g * g;
  const double norm = std::sqrt(sq);
  if (norm > max_norm && norm > 0) {
    const double k = max_norm / norm;
    for (auto& p : params)
      for (auto& g : p.grad.data) g *= k;
  }
  return norm;
}

inline void zero_grad(ParameterSet& params) {
  for (auto& p : params) p.zero_grad();
}

}  // namespace ccf::nn
