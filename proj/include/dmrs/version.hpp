#pragma once

namespace dmrs {
inline constexpr const char* kVersion = "0.1.0";
}
