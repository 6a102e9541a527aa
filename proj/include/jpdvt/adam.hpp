#pragma once

#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "jpdvt/params.hpp"

namespace jpdvt {

template <typename T>
struct AdamState {
  T lr = T(1e-4);
  T beta1 = T(0.9);
  T beta2 = T(0.999);
  T eps = T(1e-8);
  int64_t step = 0;
  ParamStore<T> m;
  ParamStore<T> v;

  static AdamState init(const ParamStore<T>& params, T lr) {
    AdamState s;
    s.lr = lr;
    for (const auto& [name, t] : params.items) {
      s.m.add(name, Tensor<T>(t.shape));
      s.v.add(name, Tensor<T>(t.shape));
    }
    return s;
  }
};

// Bias-corrected Adam update. `grads` is aligned with `params.items`.
// A non-finite gradient aborts the whole step before any state is touched.
template <typename T>
void adam_step(AdamState<T>& state, ParamStore<T>& params, const std::vector<Tensor<T>>& grads) {
  if (grads.size() != params.items.size())
    throw std::invalid_argument("adam_step: gradient count mismatch");
  for (size_t p = 0; p < grads.size(); ++p) {
    const auto& [name, t] = params.items[p];
    if (grads[p].shape != t.shape)
      throw std::invalid_argument("adam_step: gradient shape mismatch for " + name + ": " +
                                  shape_str(grads[p].shape) + " vs " + shape_str(t.shape));
    for (T g : grads[p].data) {
      if (!std::isfinite(static_cast<double>(g)))
        throw std::runtime_error("adam_step: non-finite gradient in parameter " + name);
    }
  }
  state.step += 1;
  const double bc1 = 1.0 - std::pow(static_cast<double>(state.beta1), state.step);
  const double bc2 = 1.0 - std::pow(static_cast<double>(state.beta2), state.step);
  for (size_t p = 0; p < grads.size(); ++p) {
    auto& theta = params.items[p].second;
    auto& m = state.m.items[p].second;
    auto& v = state.v.items[p].second;
    const auto& g = grads[p].data;
    for (size_t i = 0; i < g.size(); ++i) {
      m.data[i] = state.beta1 * m.data[i] + (T(1) - state.beta1) * g[i];
      v.data[i] = state.beta2 * v.data[i] + (T(1) - state.beta2) * g[i] * g[i];
      const T mhat = m.data[i] / static_cast<T>(bc1);
      const T vhat = v.data[i] / static_cast<T>(bc2);
      theta.data[i] -= state.lr * mhat / (std::sqrt(vhat) + state.eps);
    }
  }
}

}  // namespace jpdvt
