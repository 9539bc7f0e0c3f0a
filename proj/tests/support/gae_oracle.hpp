#pragma once

#include <cstddef>
#include <vector>

#include "emsrl/rl.hpp"

namespace emsrl::testing {

// Direct summation: A_t = sum_l (gamma * lambda)^l delta_{t+l}, with a zero
// value after the last step.
inline rl::GaeResult gae_by_summation(const std::vector<double>& r, const std::vector<double>& v,
                                      double gamma, double lambda) {
  const std::size_t n = r.size();
  std::vector<double> delta(n);
  for (std::size_t t = 0; t < n; ++t) {
    const double next = t + 1 < n ? v[t + 1] : 0.0;
    delta[t] = r[t] + gamma * next - v[t];
  }
  rl::GaeResult out{std::vector<double>(n), std::vector<double>(n)};
  for (std::size_t t = 0; t < n; ++t) {
    double acc = 0.0, w = 1.0;
    for (std::size_t l = t; l < n; ++l) {
      acc += w * delta[l];
      w *= gamma * lambda;
    }
    out.advantages[t] = acc;
    out.returns[t] = acc + v[t];
  }
  return out;
}

}  // namespace emsrl::testing
