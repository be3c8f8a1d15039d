#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "irrclr/errors.hpp"

namespace irrclr {

using Shape = std::vector<std::int64_t>;

inline std::int64_t numel(const Shape& s) {
  std::int64_t n = 1;
  for (auto e : s) n *= e;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "(";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + ")";
}

// Dense row-major tensor. Training runs on float; gradient checks and the
// loss oracles instantiate the same kernels with double.
template <typename T>
struct Tensor {
  Shape shape;
  std::vector<T> v;

  Tensor() = default;
  Tensor(Shape s, std::vector<T> values) : shape(std::move(s)), v(std::move(values)) {
    if (static_cast<std::int64_t>(v.size()) != numel(shape)) {
      throw ValidationError("tensor: value count " + std::to_string(v.size()) +
                            " does not match shape " + shape_str(shape));
    }
  }

  static Tensor zeros(Shape s) {
    auto n = numel(s);
    return Tensor(std::move(s), std::vector<T>(static_cast<std::size_t>(n), T(0)));
  }
  static Tensor full(Shape s, T value) {
    auto n = numel(s);
    return Tensor(std::move(s), std::vector<T>(static_cast<std::size_t>(n), value));
  }
  static Tensor scalar(T value) { return Tensor({1}, {value}); }

  std::int64_t size() const { return static_cast<std::int64_t>(v.size()); }

  bool all_finite() const {
    for (T x : v) {
      if (!std::isfinite(static_cast<double>(x))) return false;
    }
    return true;
  }

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) out[i] = static_cast<U>(v[i]);
    return Tensor<U>(shape, std::move(out));
  }
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace irrclr
