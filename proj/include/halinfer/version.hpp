#pragma once

namespace halinfer {

inline constexpr const char* kVersion = "0.1.0";

} // namespace halinfer
