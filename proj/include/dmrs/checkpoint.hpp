#pragma once

// Binary model checkpoints: "DMRS" magic, u32 LE format version, u64 LE
// manifest length, JSON manifest (architecture, network config, tensor
// table), then every tensor as little-endian float32 in table order.

#include <cstdint>
#include <filesystem>

#include "dmrs/network.hpp"

namespace dmrs {

inline constexpr std::uint32_t kCheckpointVersion = 1;

void save_checkpoint(const Model<float>& model, const std::filesystem::path& path);

/// Restores architecture, config, parameters and running statistics.
Model<float> load_checkpoint(const std::filesystem::path& path);

/// As above, but ConfigError when the stored architecture or config differ
/// from the expected ones.
Model<float> load_checkpoint(const std::filesystem::path& path, Arch expected_arch,
                             const NetworkConfig& expected_config);

/// Bytes of float32 payload for a model: 4 * (parameters + running stats).
std::uint64_t checkpoint_payload_bytes(const Model<float>& model);

}  // namespace dmrs
