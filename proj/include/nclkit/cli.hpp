#ifndef NCLKIT_CLI_HPP_
#define NCLKIT_CLI_HPP_

#include <filesystem>
#include <iosfwd>
#include <map>
#include <string>

#include "nclkit/embed.hpp"
#include "nclkit/error.hpp"

namespace nclkit::cli {

inline constexpr const char* kVersion = "0.1.0";

// 0 success, 2 usage/validation, 3 data error, 4 numerical failure.
inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitNumerical = 4;

int exit_code(ErrorKind kind);

// Flat "key = value" lines. Blank lines and lines starting with '#' are
// skipped. Throws kInvalidArgument naming the key for a line without '=' or
// with an empty value.
std::map<std::string, std::string> parse_config(std::istream& in);
std::map<std::string, std::string> parse_config(const std::filesystem::path& path);

// Entry point of the nclkit binary: nclkit <normalize|eval|train|sweep|analyze> ...
// Never throws; returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

// "axis,index,bias" rows as written by `nclkit normalize`: text rows give a
// (length rows), video rows give b (length cols). Every index must appear
// exactly once.
std::pair<Vector, Vector> read_bias_csv(const std::filesystem::path& path, Eigen::Index rows,
                                        Eigen::Index cols);

}  // namespace nclkit::cli

#endif  // NCLKIT_CLI_HPP_
