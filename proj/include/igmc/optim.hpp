#pragma once

#include <cmath>
#include <map>
#include <string>
#include <vector>

#include "igmc/common.hpp"
#include "igmc/tensor.hpp"

namespace igmc {

// Per-parameter Adam accumulators, keyed by parameter name so that the state
// survives checkpoint round-trips independent of construction order.
struct AdamState {
  struct Slot {
    std::vector<Real> m, v;
  };
  std::map<std::string, Slot> slots;
  int64_t step = 0;  // completed update count
};

// One Adam update with bias correction over a named parameter set.
// Gradients are read from each tensor's grad buffer and then zeroed.
inline void adam_step(std::vector<std::pair<std::string, Tensor>>& params, AdamState& state,
                      Real lr, Real beta1 = 0.9, Real beta2 = 0.999, Real eps = 1e-8) {
  state.step += 1;
  const Real bc1 = Real(1) - std::pow(beta1, Real(state.step));
  const Real bc2 = Real(1) - std::pow(beta2, Real(state.step));
  for (auto& [name, p] : params) {
    if (!p.requires_grad())
      throw ArgumentError("adam_step: parameter '" + name + "' has no gradient");
    auto& slot = state.slots[name];
    if (slot.m.empty()) {
      slot.m.assign(p.size(), Real(0));
      slot.v.assign(p.size(), Real(0));
    } else if (slot.m.size() != p.size()) {
      throw ArgumentError("adam_step: state shape mismatch for '" + name + "'");
    }
    Real* theta = p.data();
    Real* g = p.grad();
    for (size_t i = 0; i < p.size(); ++i) {
      slot.m[i] = beta1 * slot.m[i] + (Real(1) - beta1) * g[i];
      slot.v[i] = beta2 * slot.v[i] + (Real(1) - beta2) * g[i] * g[i];
      const Real mhat = slot.m[i] / bc1;
      const Real vhat = slot.v[i] / bc2;
      theta[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
    p.zero_grad();
  }
}

}  // namespace igmc
