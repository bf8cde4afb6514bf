#include "dmrs/optim.hpp"

#include <cmath>

namespace dmrs {

template <typename T>
void adam_step(ParamStore<T>& params, const GradList<T>& grads, OptimizerState& state, double lr) {
  if (grads.size() != params.entries().size()) {
    throw IntegrityError("adam_step got " + std::to_string(grads.size()) + " gradients for " +
                         std::to_string(params.entries().size()) + " parameters");
  }
  for (const auto& [name, g] : grads) {
    if (!params.contains(name)) throw IntegrityError("gradient for unknown parameter '" + name + "'");
    if (params.get(name).shape() != g.shape()) {
      throw IntegrityError("gradient for '" + name + "' has shape " + shape_str(g.shape()) +
                           ", parameter has " + shape_str(params.get(name).shape()));
    }
  }

  ++state.step;
  const auto& o = state.options;
  const double c1 = 1.0 - std::pow(o.beta1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(o.beta2, static_cast<double>(state.step));
  for (const auto& [name, g] : grads) {
    auto [mit, new_m] = state.first_moment.try_emplace(name, TensorD(g.shape()));
    auto [vit, new_v] = state.second_moment.try_emplace(name, TensorD(g.shape()));
    auto m = mit->second.mutable_data();
    auto v = vit->second.mutable_data();
    auto p = params.get(name).mutable_data();
    const auto gd = g.data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double gi = gd[i];
      m[i] = o.beta1 * m[i] + (1.0 - o.beta1) * gi;
      v[i] = o.beta2 * v[i] + (1.0 - o.beta2) * gi * gi;
      const double mhat = m[i] / c1, vhat = v[i] / c2;
      p[i] = static_cast<T>(p[i] - lr * mhat / (std::sqrt(vhat) + o.eps));
    }
  }
}

double lr_at_epoch(int epoch, double base_lr, double decay) {
  if (epoch < 0) throw ConfigError("epoch must be non-negative");
  return base_lr * std::pow(decay, epoch);
}

template void adam_step(ParamStore<float>&, const GradList<float>&, OptimizerState&, double);
template void adam_step(ParamStore<double>&, const GradList<double>&, OptimizerState&, double);

}  // namespace dmrs
