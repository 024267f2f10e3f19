#pragma once

namespace qae {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace qae
