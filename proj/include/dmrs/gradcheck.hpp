#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "dmrs/params.hpp"

namespace dmrs {

/// Scalar objective over a parameter store. When `grads` is non-null the
/// objective also fills it with its analytic gradient, keyed by name.
using Objective = std::function<double(ParamStore<double>& params, GradList<double>* grads)>;

struct GradCheckOptions {
  double h = 1e-5;
  double tol = 1e-4;
  /// Tensors larger than this are checked on a seeded random subset of this
  /// many coordinates.
  std::int64_t coords_per_tensor = 48;
  std::uint64_t seed = 0;
};

struct GradCheckResult {
  double max_relative_error = 0.0;
  std::string worst_parameter;
  std::int64_t worst_index = -1;
  std::int64_t coordinates_checked = 0;
  bool pass = false;
};

/// Central-difference check of the objective's analytic gradient. The error
/// per coordinate is |analytic - numeric| / max(1, |analytic| + |numeric|).
/// Throws NumericError if the objective is non-finite anywhere it is probed.
GradCheckResult gradient_check(const Objective& objective, ParamStore<double>& params,
                               const GradCheckOptions& options = {});

}  // namespace dmrs
