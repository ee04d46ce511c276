#include "dgp/optimizer.hpp"

#include <cmath>

#include "dgp/errors.hpp"

namespace dgp {

void adam_step(std::span<const ParameterRef> params, const Gradients& grads,
               AdamState& state) {
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(state.beta1, t);
  const double correction2 = 1.0 - std::pow(state.beta2, t);
  for (const auto& p : params) {
    auto g_it = grads.find(p.name);
    if (g_it == grads.end()) continue;
    const Tensor& g = g_it->second;
    Tensor& x = *p.value;
    if (g.shape() != x.shape()) {
      throw ShapeError("adam: gradient for '" + p.name + "' has shape " +
                       g.shape_string() + ", parameter " + x.shape_string());
    }
    auto [m_it, m_new] = state.first_moment.try_emplace(p.name, x.shape());
    auto [v_it, v_new] = state.second_moment.try_emplace(p.name, x.shape());
    Tensor& m = m_it->second;
    Tensor& v = v_it->second;
    for (std::size_t i = 0; i < x.size(); ++i) {
      m[i] = state.beta1 * m[i] + (1.0 - state.beta1) * g[i];
      v[i] = state.beta2 * v[i] + (1.0 - state.beta2) * g[i] * g[i];
      const double m_hat = m[i] / correction1;
      const double v_hat = v[i] / correction2;
      x[i] -= state.learning_rate * m_hat / (std::sqrt(v_hat) + state.epsilon);
    }
  }
}

}  // namespace dgp
