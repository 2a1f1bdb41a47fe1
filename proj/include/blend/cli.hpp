#pragma once

#include <iosfwd>
#include <memory>
#include <string>
#include <string_view>
#include <vector>

#include "blend/backend.hpp"

namespace blend::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kFailure = 1;
inline constexpr int kUsage = 2;
inline constexpr int kInvalid = 3;
inline constexpr int kNotFound = 4;
inline constexpr int kConflict = 5;

// "toy" or "sd". The sd backend needs model components this build does not
// ship, so selecting it fails with a diagnostic.
std::unique_ptr<DiffusionBackend> make_backend(std::string_view name);

// Backend name from BLEND_BACKEND, "toy" when unset.
std::string default_backend_name();

// args excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace blend::cli
