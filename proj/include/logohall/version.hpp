#pragma once

namespace logohall {
inline constexpr const char* kVersion = "0.3.0";
}
