#pragma once

namespace crl {

inline constexpr const char* kLibraryName = "crl";
inline constexpr const char* kLibraryVersion = "0.1.0";

}  // namespace crl
