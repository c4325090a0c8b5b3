#pragma once

#include <iosfwd>

namespace nlos {

inline constexpr const char* kVersion = "0.1.0";

/// The batch CLI. Returns 0 on success, 2 on parse or validation errors and
/// 1 on runtime failures; messages go to err.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace nlos
