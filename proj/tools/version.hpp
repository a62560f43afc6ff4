#pragma once

namespace gedf::cli {

inline constexpr const char* kToolVersion = "1.0.0";

}  // namespace gedf::cli
