#pragma once

#include <iosfwd>
#include <string>

namespace perpetuity {

inline constexpr const char* kVersion = "0.1.0";

/// Runs one CLI invocation. Returns 0 on success, 1 on a domain error and
/// 2 on a usage error.
int dispatch(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace perpetuity
