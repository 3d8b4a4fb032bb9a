#pragma once

#include <map>
#include <string>

namespace mecal {

inline constexpr const char* kVersion = "0.1.0";

/// Versions of the numerical libraries this build was compiled against.
std::map<std::string, std::string> library_versions();

}  // namespace mecal
