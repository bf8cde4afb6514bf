#pragma once

#include <json.hpp>

#include "dmrs/network.hpp"

namespace dmrs {

nlohmann::json config_to_json(const NetworkConfig& config);
/// Missing or mistyped fields raise FormatError.
NetworkConfig config_from_json(const nlohmann::json& j);

}  // namespace dmrs
