#pragma once

#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace jpdvt {

// Linear variance schedule. beta(t) is defined for t in [1, T];
// alpha_bar(t) = prod_{s<=t} (1 - beta_s) with alpha_bar(0) = 1.
struct NoiseSchedule {
  int64_t T = 0;
  std::vector<double> betas;       // betas[t-1] = beta_t
  std::vector<double> alpha_bars;  // alpha_bars[t] = alpha_bar(t), index 0..T

  double beta(int64_t t) const {
    check_t(t);
    return betas[static_cast<size_t>(t - 1)];
  }

  double alpha_bar(int64_t t) const {
    if (t < 0 || t > T) throw std::out_of_range("alpha_bar: t out of range [0," + std::to_string(T) + "]");
    return alpha_bars[static_cast<size_t>(t)];
  }

  void check_t(int64_t t) const {
    if (t < 1 || t > T)
      throw std::out_of_range("schedule: t=" + std::to_string(t) + " outside [1," +
                              std::to_string(T) + "]");
  }
};

inline constexpr double kDefaultBetaStart = 1e-4;
inline constexpr double kDefaultBetaEnd = 2e-2;
inline constexpr int64_t kDefaultTimesteps = 1000;

inline NoiseSchedule linear_schedule(int64_t T = kDefaultTimesteps,
                                     double beta_start = kDefaultBetaStart,
                                     double beta_end = kDefaultBetaEnd) {
  if (T < 1) throw std::invalid_argument("linear_schedule: T must be >= 1");
  if (!(0 < beta_start && beta_start < beta_end && beta_end < 1))
    throw std::invalid_argument("linear_schedule: need 0 < beta_start < beta_end < 1");
  NoiseSchedule s;
  s.T = T;
  s.betas.resize(static_cast<size_t>(T));
  s.alpha_bars.resize(static_cast<size_t>(T) + 1);
  s.alpha_bars[0] = 1.0;
  for (int64_t t = 1; t <= T; ++t) {
    const double frac = (T == 1) ? 0.0 : static_cast<double>(t - 1) / static_cast<double>(T - 1);
    const double beta = beta_start + (beta_end - beta_start) * frac;
    s.betas[static_cast<size_t>(t - 1)] = beta;
    s.alpha_bars[static_cast<size_t>(t)] = s.alpha_bars[static_cast<size_t>(t - 1)] * (1.0 - beta);
  }
  return s;
}

}  // namespace jpdvt
