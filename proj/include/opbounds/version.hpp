#pragma once

namespace opbounds {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace opbounds
