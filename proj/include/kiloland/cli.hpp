#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace kiloland::cli {

inline constexpr const char* kVersion = "0.1.0";

/// Runs one command line. Returns the process exit code: 0 success,
/// 1 validation failure, 2 usage error, 3 I/O or integrity error.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int dispatch(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// Output directory: explicit flag, else config value, else $KILOLAND_OUT, else ".".
std::filesystem::path resolve_out_dir(const std::string& flag, const std::string& config_value);

}  // namespace kiloland::cli
