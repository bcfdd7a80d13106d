#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace povmap {

inline constexpr std::string_view kVersion = "1.0.0";

/// Comment line heading every output file: version, seed and a SHA-256
/// prefix of each input (by file name, so output bytes do not depend on
/// where the inputs live).
std::string manifest_line(std::uint64_t seed, std::span<const std::filesystem::path> inputs);

/// Hex SHA-256 of a file's contents.
std::string sha256_file(const std::filesystem::path& path);

/// Runs one subcommand. args excludes the program name. Returns the process
/// exit status; errors are reported as one line on stderr.
int run(const std::vector<std::string>& args);
int run(int argc, char** argv);

} // namespace povmap
