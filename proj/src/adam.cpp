#include "wsss/adam.hpp"

#include <cmath>

#include "wsss/error.hpp"

namespace wsss {

void adam_step(const ParamList& params, AdamState& state, double lr) {
  if (state.m.empty()) {
    for (const auto& [name, t] : params) {
      state.m.emplace_back(t.numel(), 0.0);
      state.v.emplace_back(t.numel(), 0.0);
    }
  }
  if (state.m.size() != params.size()) {
    throw ContractError("adam_step: optimizer state tracks " +
                        std::to_string(state.m.size()) + " parameters, got " +
                        std::to_string(params.size()));
  }
  std::vector<std::vector<double>> grads;
  grads.reserve(params.size());
  for (std::size_t p = 0; p < params.size(); ++p) {
    const auto& [name, t] = params[p];
    if (state.m[p].size() != t.numel()) {
      throw ContractError("adam_step: moment shape mismatch for " + name);
    }
    grads.push_back(t.grad());
    for (double g : grads.back()) {
      if (!std::isfinite(g)) throw NumericError("non-finite gradient in parameter " + name);
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  for (std::size_t p = 0; p < params.size(); ++p) {
    Tensor param = params[p].second;
    auto values = param.mutable_values();
    auto& m = state.m[p];
    auto& v = state.v[p];
    const auto& g = grads[p];
    for (std::size_t i = 0; i < values.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double m_hat = m[i] / c1;
      const double v_hat = v[i] / c2;
      values[i] -= lr * m_hat / (std::sqrt(v_hat) + state.eps);
    }
  }
}

}  // namespace wsss
