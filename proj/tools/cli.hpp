#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

namespace kwl::cli {

enum ExitCode : int { kOk = 0, kValidation = 2, kViolation = 3, kResource = 4 };

/// Runs one command line (without the program name). Never throws.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

std::string sha256_file(const std::filesystem::path& path);

}  // namespace kwl::cli
