#pragma once

#include <cstdint>

#include "dmrs/gradcheck.hpp"
#include "dmrs/network.hpp"

namespace dmrs {

struct ModelCheckOptions {
  std::int64_t batch = 2;
  std::int64_t size = 0;  // square input extent; 0 picks 2 * 2^depth
  GradCheckOptions check;
};

/// Finite-difference check of total_loss through a freshly initialised
/// double-precision model (train-mode batch norm, running statistics left
/// untouched), on seeded random inputs and labels.
GradCheckResult check_model_gradients(Arch arch, const NetworkConfig& config, std::uint64_t seed,
                                      const ModelCheckOptions& options = {});

}  // namespace dmrs
