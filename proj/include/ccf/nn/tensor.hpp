#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include "ccf/error.hpp"

namespace ccf::nn {

/// Dense row-major float64 tensor. Graph ops treat every tensor as a matrix:
/// rank-1 tensors are a single row, higher ranks fold trailing dimensions
/// into columns.
struct Tensor {
  std::vector<std::size_t> shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> s, double fill = 0.0) : shape(std::move(s)), data(count(shape), fill) {}
  Tensor(std::vector<std::size_t> s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
    if (data.size() != count(shape)) throw Error(ErrorKind::ShapeMismatch, "tensor value count does not match shape");
  }

  static std::size_t count(const std::vector<std::size_t>& s) {
    return std::accumulate(s.begin(), s.end(), std::size_t{1}, std::multiplies<>());
  }

  std::size_t size() const noexcept { return data.size(); }
  std::size_t rows() const noexcept { return shape.size() <= 1 ? 1 : shape[0]; }
  std::size_t cols() const noexcept { return rows() == 0 ? 0 : data.size() / rows(); }
  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }
  double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

  std::string shape_string() const {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) s += (i ? "," : "") + std::to_string(shape[i]);
    return s + "]";
  }
};

inline Tensor matrix(std::size_t rows, std::size_t cols, double fill = 0.0) { return Tensor({rows, cols}, fill); }

/// Trainable tensor plus its accumulated gradient.
struct Parameter {
  std::string name;
  Tensor value;
  Tensor grad;

  Parameter(std::string n, Tensor v) : name(std::move(n)), value(std::move(v)), grad(value.shape) {}

  void zero_grad() { std::fill(grad.data.begin(), grad.data.end(), 0.0); }
};

using ParameterSet = std::vector<Parameter>;

inline std::size_t element_count(const ParameterSet& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.value.size();
  return n;
}

}  // namespace ccf::nn
