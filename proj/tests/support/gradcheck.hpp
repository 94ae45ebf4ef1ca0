#pragma once

#include <algorithm>
#include <cmath>
#include <random>
#include <vector>

#include "ccf/architectures.hpp"
#include "ccf/nn/adam.hpp"

namespace ccf::testing {

struct GradCheck {
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

/// Relative error with a small absolute floor so that exactly-zero and
/// near-zero gradients do not divide by zero.
inline double relative_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6});
}

/// Random tiny descriptor: d <= 5, h <= 6.
inline ModelDescriptor tiny_descriptor(Architecture a, std::mt19937_64& rng) {
  std::uniform_int_distribution<std::size_t> dd(1, 5), hh(1, 6), ll(2, 3), kk(0, 2);
  ModelDescriptor d;
  d.architecture = a;
  d.input_dim = dd(rng);
  d.hidden = hh(rng);
  d.layers = a == Architecture::Stacked ? ll(rng) : 1;
  d.kernel = 2 * kk(rng) + 1;
  return d;
}

/// Backward-pass gradients of the batch MSE versus central finite
/// differences (step 1e-5) for every parameter element.
inline GradCheck check_gradients(const ModelDescriptor& desc, std::size_t T, std::size_t batch, std::uint64_t seed,
                                 double step = 1e-5) {
  Model model(desc, seed);
  std::mt19937_64 rng(seed + 17);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> windows(batch * T * desc.input_dim), target(batch);
  for (auto& v : windows) v = u(rng);
  for (auto& v : target) v = u(rng);

  auto loss_at = [&](const Model& m) {
    auto pred = m.predict(windows, batch, T);
    double s = 0;
    for (std::size_t i = 0; i < batch; ++i) s += (pred[i] - target[i]) * (pred[i] - target[i]);
    return s / static_cast<double>(batch);
  };

  nn::zero_grad(model.parameters());
  {
    nn::Graph g;
    auto steps = Model::step_inputs(g, windows, batch, T, desc.input_dim);
    g.backward(g.mse(model.forward(g, steps), target));
  }

  GradCheck out;
  auto& params = model.parameters();
  for (auto& p : params)
    for (std::size_t i = 0; i < p.value.size(); ++i) {
      const double orig = p.value[i];
      p.value[i] = orig + step;
      const double up = loss_at(model);
      p.value[i] = orig - step;
      const double down = loss_at(model);
      p.value[i] = orig;
      const double numeric = (up - down) / (2.0 * step);
      out.max_rel_error = std::max(out.max_rel_error, relative_error(p.grad[i], numeric));
      ++out.checked;
    }
  return out;
}

}  // namespace ccf::testing
