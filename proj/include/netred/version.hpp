#pragma once

namespace netred {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace netred
