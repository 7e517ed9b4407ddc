#pragma once

namespace claimcheck {

inline constexpr const char* kVersion = "0.1.0";

}  // namespace claimcheck
