#pragma once

#include <cmath>
#include <random>
#include <span>
#include <utility>
#include <vector>

#include "ccf/nn/graph.hpp"

namespace ccf::nn {

/// Gate blocks are stacked in the fixed order (input, forget, cell candidate,
/// output) along the 4h axis of W, U and b.
enum Gate : std::size_t { kInputGate = 0, kForgetGate = 1, kCandidate = 2, kOutputGate = 3 };

struct LstmState {
  Var h;
  Var c;
};

/// Graph handles of one LSTM layer's weights: W [4h x d], U [4h x h], b [4h].
struct LstmWeights {
  Var W, U, b;
  std::size_t hidden = 0;
};

/// c_t = f * c_prev + i * g, h_t = o * tanh(c_t) for a batch [B x d].
inline LstmState lstm_cell_step(Graph& g, const LstmWeights& w, Var x, LstmState prev) {
  const auto h = w.hidden;
  auto z = g.add_bias(g.add(g.matmul_nt(x, w.W), g.matmul_nt(prev.h, w.U)), w.b);
  auto i = g.sigmoid(g.slice_cols(z, kInputGate * h, h));
  auto f = g.sigmoid(g.slice_cols(z, kForgetGate * h, h));
  auto cand = g.tanh(g.slice_cols(z, kCandidate * h, h));
  auto o = g.sigmoid(g.slice_cols(z, kOutputGate * h, h));
  auto c = g.add(g.mul(f, prev.c), g.mul(i, cand));
  return {g.mul(o, g.tanh(c)), c};
}

/// Runs an LSTM over a sequence of [B x d] inputs from zero state and returns
/// the hidden state at every step.
inline std::vector<Var> lstm_sequence(Graph& g, const LstmWeights& w, const std::vector<Var>& xs) {
  const auto batch = g.value(xs.front()).rows();
  LstmState s{g.zeros(batch, w.hidden), g.zeros(batch, w.hidden)};
  std::vector<Var> hs;
  hs.reserve(xs.size());
  for (auto x : xs) {
    s = lstm_cell_step(g, w, x, s);
    hs.push_back(s.h);
  }
  return hs;
}

/// ConvLSTM weights for features-as-positions: Kx [4hc x kernel*cin],
/// Kh [4hc x kernel*hc], b [4hc]. Gate blocks follow the same order as LSTM.
struct ConvLstmWeights {
  Var Kx, Kh, b;
  std::size_t positions = 0;
  std::size_t in_channels = 1;
  std::size_t channels = 0;
  std::size_t kernel = 3;
};

inline LstmState conv_lstm_cell_step(Graph& g, const ConvLstmWeights& w, Var x, LstmState prev) {
  const auto P = w.positions, hc = w.channels, gates = 4 * hc;
  auto z = g.add_channel_bias(g.add(g.conv_positions(x, w.Kx, P, w.in_channels, w.kernel),
                                    g.conv_positions(prev.h, w.Kh, P, hc, w.kernel)),
                              w.b, P);
  auto i = g.sigmoid(g.slice_channels(z, P, gates, kInputGate * hc, hc));
  auto f = g.sigmoid(g.slice_channels(z, P, gates, kForgetGate * hc, hc));
  auto cand = g.tanh(g.slice_channels(z, P, gates, kCandidate * hc, hc));
  auto o = g.sigmoid(g.slice_channels(z, P, gates, kOutputGate * hc, hc));
  auto c = g.add(g.mul(f, prev.c), g.mul(i, cand));
  return {g.mul(o, g.tanh(c)), c};
}

/// Plain-vector LSTM parameters for single-sample use.
struct LstmCellParams {
  std::size_t input_dim = 0;
  std::size_t hidden = 0;
  Tensor W;  // [4h x d]
  Tensor U;  // [4h x h]
  Tensor b;  // [4h]

  LstmCellParams(std::size_t d, std::size_t h)
      : input_dim(d), hidden(h), W({4 * h, d}), U({4 * h, h}), b(std::vector<std::size_t>{4 * h}) {}

  std::size_t parameter_count() const { return W.size() + U.size() + b.size(); }
};

/// One LSTM step on single vectors; returns (h_t, c_t).
inline std::pair<std::vector<double>, std::vector<double>> lstm_cell_step(const LstmCellParams& p,
                                                                          std::span<const double> x,
                                                                          std::span<const double> h_prev,
                                                                          std::span<const double> c_prev) {
  if (x.size() != p.input_dim || h_prev.size() != p.hidden || c_prev.size() != p.hidden)
    throw Error(ErrorKind::ShapeMismatch, "lstm_cell_step input sizes do not match the cell");
  Graph g(false);
  auto W = g.constant(p.W), U = g.constant(p.U), b = g.constant(p.b);
  auto xv = g.constant(Tensor({1, p.input_dim}, std::vector<double>(x.begin(), x.end())));
  auto hv = g.constant(Tensor({1, p.hidden}, std::vector<double>(h_prev.begin(), h_prev.end())));
  auto cv = g.constant(Tensor({1, p.hidden}, std::vector<double>(c_prev.begin(), c_prev.end())));
  auto s = lstm_cell_step(g, {W, U, b, p.hidden}, xv, {hv, cv});
  return {g.value(s.h).data, g.value(s.c).data};
}

/// Gate weights ~ U(-1/sqrt(h), 1/sqrt(h)); forget-gate bias starts at +1.
inline void init_gates(Tensor& W, Tensor& U, Tensor& b, std::size_t hidden, std::mt19937_64& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(hidden));
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (auto& v : W.data) v = dist(rng);
  for (auto& v : U.data) v = dist(rng);
  for (auto& v : b.data) v = dist(rng);
  for (std::size_t j = 0; j < hidden; ++j) b[kForgetGate * hidden + j] = 1.0;
}

}  // namespace ccf::nn
