#pragma once

namespace mofa {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace mofa
