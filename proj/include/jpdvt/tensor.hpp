#pragma once

#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "jpdvt/rng.hpp"

namespace jpdvt {

using Shape = std::vector<int64_t>;

inline int64_t numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
  os << "]";
  return os.str();
}

// Dense row-major tensor, rank 0..3. All math lives on the tape; this is
// just shape + storage.
template <typename T>
struct Tensor {
  Shape shape;
  std::vector<T> data;

  Tensor() = default;
  explicit Tensor(Shape s) : shape(std::move(s)), data(static_cast<size_t>(numel(shape)), T(0)) {}
  Tensor(Shape s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
    if (static_cast<int64_t>(data.size()) != numel(shape)) {
      throw std::invalid_argument("tensor: data length " + std::to_string(data.size()) +
                                  " does not match shape " + shape_str(shape));
    }
  }

  int64_t size() const { return static_cast<int64_t>(data.size()); }
  int64_t rank() const { return static_cast<int64_t>(shape.size()); }
  int64_t extent(int i) const { return shape.at(static_cast<size_t>(i)); }

  T& at(int64_t i) { return data[static_cast<size_t>(i)]; }
  const T& at(int64_t i) const { return data[static_cast<size_t>(i)]; }
  T& at(int64_t i, int64_t j) { return data[static_cast<size_t>(i * shape[1] + j)]; }
  const T& at(int64_t i, int64_t j) const { return data[static_cast<size_t>(i * shape[1] + j)]; }
  T& at(int64_t i, int64_t j, int64_t k) {
    return data[static_cast<size_t>((i * shape[1] + j) * shape[2] + k)];
  }
  const T& at(int64_t i, int64_t j, int64_t k) const {
    return data[static_cast<size_t>((i * shape[1] + j) * shape[2] + k)];
  }

  void fill(T v) { std::fill(data.begin(), data.end(), v); }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out;
    out.shape = shape;
    out.data.resize(data.size());
    for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
    return out;
  }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
};

template <typename T>
Tensor<T> zeros(Shape s) {
  return Tensor<T>(std::move(s));
}

template <typename T>
Tensor<T> full(Shape s, T v) {
  Tensor<T> t(std::move(s));
  t.fill(v);
  return t;
}

template <typename T>
Tensor<T> randn(Shape s, Rng& rng, T stddev = T(1)) {
  Tensor<T> t(std::move(s));
  for (auto& x : t.data) x = static_cast<T>(rng.normal()) * stddev;
  return t;
}

template <typename T>
Tensor<T> rand_uniform(Shape s, Rng& rng, T lo, T hi) {
  Tensor<T> t(std::move(s));
  for (auto& x : t.data) x = lo + static_cast<T>(rng.uniform()) * (hi - lo);
  return t;
}

// Xavier/Glorot uniform, the usual init for the linear layers here.
template <typename T>
Tensor<T> xavier_uniform(int64_t fan_in, int64_t fan_out, Rng& rng) {
  const T bound = static_cast<T>(std::sqrt(6.0 / static_cast<double>(fan_in + fan_out)));
  return rand_uniform<T>({fan_in, fan_out}, rng, -bound, bound);
}

}  // namespace jpdvt
