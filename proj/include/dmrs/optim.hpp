#pragma once

#include <cstdint>
#include <string>
#include <unordered_map>

#include "dmrs/params.hpp"

namespace dmrs {

struct AdamOptions {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adam moments keyed by parameter name, kept in double precision.
struct OptimizerState {
  AdamOptions options;
  std::int64_t step = 0;
  std::unordered_map<std::string, TensorD> first_moment;
  std::unordered_map<std::string, TensorD> second_moment;
};

/// One bias-corrected Adam update. Every parameter must have a gradient of
/// its own shape (IntegrityError otherwise).
template <typename T>
void adam_step(ParamStore<T>& params, const GradList<T>& grads, OptimizerState& state, double lr);

/// Staircase exponential decay: base_lr * decay^epoch.
double lr_at_epoch(int epoch, double base_lr, double decay);

}  // namespace dmrs
