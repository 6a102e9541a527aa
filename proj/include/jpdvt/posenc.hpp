#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "jpdvt/tape.hpp"
#include "jpdvt/tensor.hpp"

namespace jpdvt {

inline constexpr int kPeDim1D = 16;
inline constexpr int kPeDim2D = 32;

// Interleaved sin/cos code: entry 2i = sin(l / base^(2i/dim)),
// entry 2i+1 = cos(l / base^(2i/dim)). Base 1000, dim 16 for slot codes.
inline std::vector<double> sinusoid_code(double l, int dim, double base = 1000.0) {
  if (dim <= 0 || dim % 2 != 0) throw std::invalid_argument("sinusoid_code: dim must be even > 0");
  std::vector<double> out(static_cast<size_t>(dim));
  for (int i = 0; i < dim / 2; ++i) {
    const double freq = std::pow(base, -2.0 * i / dim);
    out[static_cast<size_t>(2 * i)] = std::sin(l * freq);
    out[static_cast<size_t>(2 * i + 1)] = std::cos(l * freq);
  }
  return out;
}

// 16-entry code for a sequence position.
inline std::vector<double> encode_1d(int64_t l) {
  if (l < 0) throw std::invalid_argument("encode_1d: position must be >= 0");
  return sinusoid_code(static_cast<double>(l), kPeDim1D);
}

// 32-entry code for a grid cell: x half first, then y half.
inline std::vector<double> encode_2d(int64_t x, int64_t y) {
  if (x < 0 || y < 0) throw std::invalid_argument("encode_2d: coordinates must be >= 0");
  std::vector<double> out = encode_1d(x);
  std::vector<double> ycode = encode_1d(y);
  out.insert(out.end(), ycode.begin(), ycode.end());
  return out;
}

// Puzzle geometry: a rows x cols grid of tiles, or a length-N sequence.
struct Layout {
  enum class Kind { Grid, Sequence };
  Kind kind = Kind::Sequence;
  int64_t rows = 0;
  int64_t cols = 0;
  int64_t length = 0;

  static Layout grid(int64_t rows, int64_t cols) {
    if (rows < 1 || cols < 1) throw std::invalid_argument("layout: grid dims must be >= 1");
    return Layout{Kind::Grid, rows, cols, rows * cols};
  }
  static Layout sequence(int64_t n) {
    if (n < 1) throw std::invalid_argument("layout: sequence length must be >= 1");
    return Layout{Kind::Sequence, 0, 0, n};
  }

  int64_t slots() const { return kind == Kind::Grid ? rows * cols : length; }
  int pe_dim() const { return kind == Kind::Grid ? kPeDim2D : kPeDim1D; }

  bool operator==(const Layout& o) const {
    return kind == o.kind && rows == o.rows && cols == o.cols && slots() == o.slots();
  }
};

// One code row per slot; grids are row-major, so slot k of an RxC grid is
// cell (x = k % C, y = k / C).
inline Tensor<double> pe_table(const Layout& layout) {
  const int64_t n = layout.slots();
  const int dim = layout.pe_dim();
  Tensor<double> table({n, dim});
  for (int64_t k = 0; k < n; ++k) {
    std::vector<double> code;
    if (layout.kind == Layout::Kind::Grid) {
      code = encode_2d(k % layout.cols, k / layout.cols);
    } else {
      code = encode_1d(k);
    }
    std::copy(code.begin(), code.end(), &table.data[static_cast<size_t>(k * dim)]);
  }
  return table;
}

// Two-layer MLP (linear, GELU, linear) lifting slot codes to token width.
// The caller decides how the result joins the content tokens: spatial models
// add it, temporal models concatenate and fuse.
template <typename T>
typename Tape<T>::Var project_codes(Tape<T>& tp, typename Tape<T>::Var codes,
                                    typename Tape<T>::Var w1, typename Tape<T>::Var b1,
                                    typename Tape<T>::Var w2, typename Tape<T>::Var b2) {
  return tp.linear(tp.gelu(tp.linear(codes, w1, b1)), w2, b2);
}

}  // namespace jpdvt
