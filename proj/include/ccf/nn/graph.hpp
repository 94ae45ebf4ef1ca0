#pragma once

#include <cmath>
#include <functional>
#include <memory>
#include <span>
#include <vector>

#include <Eigen/Dense>

#include "ccf/nn/tensor.hpp"

namespace ccf::nn {

/// Handle to a node recorded on a Graph.
struct Var {
  std::size_t id = static_cast<std::size_t>(-1);
};

namespace detail {
using RowMat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapMat = Eigen::Map<RowMat>;
using ConstMapMat = Eigen::Map<const RowMat>;

inline MapMat map(Tensor& t) {
  return MapMat(t.data.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}
inline ConstMapMat map(const Tensor& t) {
  return ConstMapMat(t.data.data(), static_cast<Eigen::Index>(t.rows()), static_cast<Eigen::Index>(t.cols()));
}

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}
}  // namespace detail

/// Reverse-mode tape over matrix-valued nodes. Nodes are appended in
/// evaluation order, so reverse insertion order is a valid topological order
/// for the backward sweep. Single-threaded; one graph per forward pass.
class Graph {
 public:
  /// With `record = false` no backward closures are stored (inference).
  explicit Graph(bool record = true) : record_(record) {}

  const Tensor& value(Var v) const { return node(v).value; }
  const Tensor& grad(Var v) const { return node(v).grad; }
  std::size_t size() const noexcept { return nodes_.size(); }

  Var constant(Tensor t) { return push(std::move(t), false, nullptr); }

  /// Leaf bound to a parameter; backward() accumulates into `p.grad`.
  Var parameter(Parameter& p) { return push(p.value, record_, &p); }

  /// A [rows x cols] constant filled with zeros.
  Var zeros(std::size_t rows, std::size_t cols) { return constant(matrix(rows, cols)); }

  /// Y = A * W^T for A [B x n], W [m x n].
  Var matmul_nt(Var a, Var w) {
    const auto& A = value(a);
    const auto& W = value(w);
    if (A.cols() != W.cols())
      throw Error(ErrorKind::ShapeMismatch, "matmul " + A.shape_string() + " x " + W.shape_string() + "^T");
    Tensor Y = matrix(A.rows(), W.rows());
    detail::map(Y).noalias() = detail::map(A) * detail::map(W).transpose();
    return push_op(std::move(Y), {a, w}, [a, w](Graph& g, const Tensor& dY) {
      if (g.needs(a)) detail::map(g.grad_ref(a)).noalias() += detail::map(dY) * detail::map(g.value(w));
      if (g.needs(w)) detail::map(g.grad_ref(w)).noalias() += detail::map(dY).transpose() * detail::map(g.value(a));
    });
  }

  Var add(Var a, Var b) {
    same_shape(a, b, "add");
    Tensor Y = value(a);
    detail::map(Y) += detail::map(value(b));
    return push_op(std::move(Y), {a, b}, [a, b](Graph& g, const Tensor& dY) {
      if (g.needs(a)) detail::map(g.grad_ref(a)) += detail::map(dY);
      if (g.needs(b)) detail::map(g.grad_ref(b)) += detail::map(dY);
    });
  }

  /// Adds a length-m bias to every row of X [B x m].
  Var add_bias(Var x, Var b) {
    const auto& X = value(x);
    const auto& bias = value(b);
    if (bias.size() != X.cols()) throw Error(ErrorKind::ShapeMismatch, "bias length does not match columns");
    Tensor Y = X;
    for (std::size_t r = 0; r < Y.rows(); ++r)
      for (std::size_t c = 0; c < Y.cols(); ++c) Y.at(r, c) += bias[c];
    return push_op(std::move(Y), {x, b}, [x, b](Graph& g, const Tensor& dY) {
      if (g.needs(x)) detail::map(g.grad_ref(x)) += detail::map(dY);
      if (g.needs(b)) {
        auto& db = g.grad_ref(b);
        for (std::size_t r = 0; r < dY.rows(); ++r)
          for (std::size_t c = 0; c < dY.cols(); ++c) db[c] += dY.at(r, c);
      }
    });
  }

  Var mul(Var a, Var b) {
    same_shape(a, b, "mul");
    Tensor Y = value(a);
    detail::map(Y).array() *= detail::map(value(b)).array();
    return push_op(std::move(Y), {a, b}, [a, b](Graph& g, const Tensor& dY) {
      if (g.needs(a)) detail::map(g.grad_ref(a)).array() += detail::map(dY).array() * detail::map(g.value(b)).array();
      if (g.needs(b)) detail::map(g.grad_ref(b)).array() += detail::map(dY).array() * detail::map(g.value(a)).array();
    });
  }

  Var sigmoid(Var x) {
    Tensor Y = value(x);
    for (auto& v : Y.data) v = detail::sigmoid(v);
    auto out = push_op(std::move(Y), {x}, {});
    set_backward(out, [x, out](Graph& g, const Tensor& dY) {
      if (!g.needs(x)) return;
      const auto& s = g.value(out);
      auto& dx = g.grad_ref(x);
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dY[i] * s[i] * (1.0 - s[i]);
    });
    return out;
  }

  Var tanh(Var x) {
    Tensor Y = value(x);
    for (auto& v : Y.data) v = std::tanh(v);
    auto out = push_op(std::move(Y), {x}, {});
    set_backward(out, [x, out](Graph& g, const Tensor& dY) {
      if (!g.needs(x)) return;
      const auto& t = g.value(out);
      auto& dx = g.grad_ref(x);
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] += dY[i] * (1.0 - t[i] * t[i]);
    });
    return out;
  }

  /// Columns [start, start + len) of X.
  Var slice_cols(Var x, std::size_t start, std::size_t len) {
    const auto& X = value(x);
    if (start + len > X.cols()) throw Error(ErrorKind::ShapeMismatch, "column slice out of range");
    Tensor Y = matrix(X.rows(), len);
    for (std::size_t r = 0; r < X.rows(); ++r)
      for (std::size_t c = 0; c < len; ++c) Y.at(r, c) = X.at(r, start + c);
    return push_op(std::move(Y), {x}, [x, start, len](Graph& g, const Tensor& dY) {
      if (!g.needs(x)) return;
      auto& dx = g.grad_ref(x);
      for (std::size_t r = 0; r < dY.rows(); ++r)
        for (std::size_t c = 0; c < len; ++c) dx.at(r, start + c) += dY.at(r, c);
    });
  }

  /// Horizontal concatenation of matrices with equal row counts.
  Var concat_cols(const std::vector<Var>& parts) {
    if (parts.empty()) throw Error(ErrorKind::ShapeMismatch, "concat of nothing");
    std::size_t rows = value(parts[0]).rows(), cols = 0;
    for (auto p : parts) {
      if (value(p).rows() != rows) throw Error(ErrorKind::ShapeMismatch, "concat row mismatch");
      cols += value(p).cols();
    }
    Tensor Y = matrix(rows, cols);
    std::size_t off = 0;
    for (auto p : parts) {
      const auto& P = value(p);
      for (std::size_t r = 0; r < rows; ++r)
        for (std::size_t c = 0; c < P.cols(); ++c) Y.at(r, off + c) = P.at(r, c);
      off += P.cols();
    }
    return push_op(std::move(Y), parts, [parts](Graph& g, const Tensor& dY) {
      std::size_t off = 0;
      for (auto p : parts) {
        auto w = g.value(p).cols();
        if (g.needs(p)) {
          auto& dp = g.grad_ref(p);
          for (std::size_t r = 0; r < dY.rows(); ++r)
            for (std::size_t c = 0; c < w; ++c) dp.at(r, c) += dY.at(r, off + c);
        }
        off += w;
      }
    });
  }

  /// 1-D convolution along the position axis. X is [B x P*Cin] laid out
  /// position-major, K is [Cout x kernel*Cin] with (tap, channel) columns,
  /// zero padding (kernel - 1) / 2 keeps P positions. Output [B x P*Cout].
  Var conv_positions(Var x, Var k, std::size_t positions, std::size_t in_channels, std::size_t kernel) {
    const auto& X = value(x);
    const auto& K = value(k);
    if (kernel % 2 == 0) throw Error(ErrorKind::ShapeMismatch, "convolution kernel width must be odd");
    if (X.cols() != positions * in_channels || K.cols() != kernel * in_channels)
      throw Error(ErrorKind::ShapeMismatch, "convolution shapes " + X.shape_string() + " / " + K.shape_string());
    const std::size_t batch = X.rows(), out_channels = K.rows(), pad = (kernel - 1) / 2;
    auto cols = std::make_shared<Tensor>(matrix(batch * positions, kernel * in_channels));
    for (std::size_t b = 0; b < batch; ++b)
      for (std::size_t p = 0; p < positions; ++p)
        for (std::size_t t = 0; t < kernel; ++t) {
          auto src = static_cast<std::ptrdiff_t>(p + t) - static_cast<std::ptrdiff_t>(pad);
          if (src < 0 || src >= static_cast<std::ptrdiff_t>(positions)) continue;
          for (std::size_t c = 0; c < in_channels; ++c)
            cols->at(b * positions + p, t * in_channels + c) = X.at(b, static_cast<std::size_t>(src) * in_channels + c);
        }
    Tensor Y = matrix(batch, positions * out_channels);
    detail::MapMat(Y.data.data(), static_cast<Eigen::Index>(batch * positions),
                   static_cast<Eigen::Index>(out_channels))
        .noalias() = detail::map(*cols) * detail::map(K).transpose();
    return push_op(std::move(Y), {x, k},
                   [x, k, cols, positions, in_channels, kernel, pad, batch, out_channels](Graph& g, const Tensor& dY) {
                     detail::ConstMapMat dYm(dY.data.data(), static_cast<Eigen::Index>(batch * positions),
                                             static_cast<Eigen::Index>(out_channels));
                     if (g.needs(k)) detail::map(g.grad_ref(k)).noalias() += dYm.transpose() * detail::map(*cols);
                     if (!g.needs(x)) return;
                     detail::RowMat dcols = dYm * detail::map(g.value(k));
                     auto& dx = g.grad_ref(x);
                     for (std::size_t b = 0; b < batch; ++b)
                       for (std::size_t p = 0; p < positions; ++p)
                         for (std::size_t t = 0; t < kernel; ++t) {
                           auto src = static_cast<std::ptrdiff_t>(p + t) - static_cast<std::ptrdiff_t>(pad);
                           if (src < 0 || src >= static_cast<std::ptrdiff_t>(positions)) continue;
                           for (std::size_t c = 0; c < in_channels; ++c)
                             dx.at(b, static_cast<std::size_t>(src) * in_channels + c) +=
                                 dcols(static_cast<Eigen::Index>(b * positions + p),
                                       static_cast<Eigen::Index>(t * in_channels + c));
                         }
                   });
  }

  /// Adds a per-channel bias at every position of X [B x P*C].
  Var add_channel_bias(Var x, Var b, std::size_t positions) {
    const auto& X = value(x);
    const auto& bias = value(b);
    const std::size_t channels = bias.size();
    if (X.cols() != positions * channels) throw Error(ErrorKind::ShapeMismatch, "channel bias shape");
    Tensor Y = X;
    for (std::size_t r = 0; r < Y.rows(); ++r)
      for (std::size_t p = 0; p < positions; ++p)
        for (std::size_t c = 0; c < channels; ++c) Y.at(r, p * channels + c) += bias[c];
    return push_op(std::move(Y), {x, b}, [x, b, positions, channels](Graph& g, const Tensor& dY) {
      if (g.needs(x)) detail::map(g.grad_ref(x)) += detail::map(dY);
      if (g.needs(b)) {
        auto& db = g.grad_ref(b);
        for (std::size_t r = 0; r < dY.rows(); ++r)
          for (std::size_t p = 0; p < positions; ++p)
            for (std::size_t c = 0; c < channels; ++c) db[c] += dY.at(r, p * channels + c);
      }
    });
  }

  /// Channels [start, start + len) at every position of X [B x P*C].
  Var slice_channels(Var x, std::size_t positions, std::size_t channels, std::size_t start, std::size_t len) {
    const auto& X = value(x);
    if (X.cols() != positions * channels || start + len > channels)
      throw Error(ErrorKind::ShapeMismatch, "channel slice out of range");
    Tensor Y = matrix(X.rows(), positions * len);
    for (std::size_t r = 0; r < X.rows(); ++r)
      for (std::size_t p = 0; p < positions; ++p)
        for (std::size_t c = 0; c < len; ++c) Y.at(r, p * len + c) = X.at(r, p * channels + start + c);
    return push_op(std::move(Y), {x}, [x, positions, channels, start, len](Graph& g, const Tensor& dY) {
      if (!g.needs(x)) return;
      auto& dx = g.grad_ref(x);
      for (std::size_t r = 0; r < dY.rows(); ++r)
        for (std::size_t p = 0; p < positions; ++p)
          for (std::size_t c = 0; c < len; ++c) dx.at(r, p * channels + start + c) += dY.at(r, p * len + c);
    });
  }

  /// Average over positions: [B x P*C] -> [B x C].
  Var mean_positions(Var x, std::size_t positions, std::size_t channels) {
    const auto& X = value(x);
    if (X.cols() != positions * channels) throw Error(ErrorKind::ShapeMismatch, "mean_positions shape");
    Tensor Y = matrix(X.rows(), channels);
    const double inv = 1.0 / static_cast<double>(positions);
    for (std::size_t r = 0; r < X.rows(); ++r)
      for (std::size_t p = 0; p < positions; ++p)
        for (std::size_t c = 0; c < channels; ++c) Y.at(r, c) += X.at(r, p * channels + c) * inv;
    return push_op(std::move(Y), {x}, [x, positions, channels, inv](Graph& g, const Tensor& dY) {
      if (!g.needs(x)) return;
      auto& dx = g.grad_ref(x);
      for (std::size_t r = 0; r < dY.rows(); ++r)
        for (std::size_t p = 0; p < positions; ++p)
          for (std::size_t c = 0; c < channels; ++c) dx.at(r, p * channels + c) += dY.at(r, c) * inv;
    });
  }

  /// Sum of all elements as a [1 x 1] node.
  Var sum(Var x) {
    Tensor Y = matrix(1, 1);
    for (double v : value(x).data) Y[0] += v;
    return push_op(std::move(Y), {x}, [x](Graph& g, const Tensor& dY) {
      if (!g.needs(x)) return;
      for (auto& v : g.grad_ref(x).data) v += dY[0];
    });
  }

  /// Mean squared error between `pred` and a constant target of equal size.
  Var mse(Var pred, const std::vector<double>& target) {
    const auto& P = value(pred);
    if (P.size() != target.size()) throw Error(ErrorKind::ShapeMismatch, "mse length mismatch");
    if (target.empty()) throw Error(ErrorKind::InvalidArgument, "mse of zero elements");
    const double n = static_cast<double>(target.size());
    Tensor Y = matrix(1, 1);
    for (std::size_t i = 0; i < target.size(); ++i) Y[0] += (P[i] - target[i]) * (P[i] - target[i]);
    Y[0] /= n;
    return push_op(std::move(Y), {pred}, [pred, target, n](Graph& g, const Tensor& dY) {
      if (!g.needs(pred)) return;
      const auto& P = g.value(pred);
      auto& dp = g.grad_ref(pred);
      for (std::size_t i = 0; i < target.size(); ++i) dp[i] += dY[0] * 2.0 * (P[i] - target[i]) / n;
    });
  }

  /// Propagates d(loss)/d(node) to every node and accumulates parameter
  /// gradients. `loss` must be a [1 x 1] node of this graph.
  void backward(Var loss) {
    if (!record_) throw Error(ErrorKind::Usage, "backward on a graph built without recording");
    if (loss.id >= nodes_.size()) throw Error(ErrorKind::Usage, "backward before forward: loss node not recorded");
    if (nodes_[loss.id].value.size() != 1) throw Error(ErrorKind::Usage, "backward needs a scalar loss");
    if (backward_done_) throw Error(ErrorKind::Usage, "backward already run on this graph");
    backward_done_ = true;
    grad_ref(loss)[0] = 1.0;
    for (std::size_t i = loss.id + 1; i-- > 0;) {
      auto& n = nodes_[i];
      if (!n.needs_grad || n.grad.data.empty()) continue;
      if (n.back) n.back(*this, n.grad);
      if (n.param) {
        auto& pg = n.param->grad.data;
        for (std::size_t j = 0; j < pg.size(); ++j) pg[j] += n.grad[j];
      }
    }
  }

 private:
  using Backward = std::function<void(Graph&, const Tensor&)>;

  struct Node {
    Tensor value;
    Tensor grad;
    Backward back;
    Parameter* param = nullptr;
    bool needs_grad = false;
  };

  const Node& node(Var v) const {
    if (v.id >= nodes_.size()) throw Error(ErrorKind::Usage, "variable does not belong to this graph");
    return nodes_[v.id];
  }

  bool needs(Var v) const { return nodes_[v.id].needs_grad; }

  Tensor& grad_ref(Var v) {
    auto& n = nodes_[v.id];
    if (n.grad.data.empty()) n.grad = Tensor(n.value.shape.empty() ? std::vector<std::size_t>{1} : n.value.shape);
    return n.grad;
  }

  Var push(Tensor value, bool needs_grad, Parameter* param) {
    if (value.shape.size() == 1) value.shape = {1, value.shape[0]};
    nodes_.push_back({std::move(value), {}, {}, param, needs_grad});
    return {nodes_.size() - 1};
  }

  Var push_op(Tensor value, std::initializer_list<Var> inputs, Backward back) {
    return push_op(std::move(value), std::vector<Var>(inputs), std::move(back));
  }

  Var push_op(Tensor value, const std::vector<Var>& inputs, Backward back) {
    bool needs_grad = false;
    if (record_)
      for (auto in : inputs) needs_grad = needs_grad || nodes_[in.id].needs_grad;
    auto v = push(std::move(value), needs_grad, nullptr);
    if (needs_grad) nodes_[v.id].back = std::move(back);
    return v;
  }

  void set_backward(Var v, Backward back) {
    if (nodes_[v.id].needs_grad) nodes_[v.id].back = std::move(back);
  }

  void same_shape(Var a, Var b, const char* op) const {
    if (value(a).rows() != value(b).rows() || value(a).cols() != value(b).cols())
      throw Error(ErrorKind::ShapeMismatch, std::string(op) + " " + value(a).shape_string() + " vs " +
                                                value(b).shape_string());
  }

  std::vector<Node> nodes_;
  bool record_ = true;
  bool backward_done_ = false;
};

}  // namespace ccf::nn
