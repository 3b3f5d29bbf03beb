#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace sickfuse::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitOther = 1;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitData = 3;
inline constexpr int kExitDivergence = 4;

/// Runs one `sickfuse <command> [flags]` invocation; args excludes the program name.
/// Errors are reported on `err` as "error[<category>]: <message>".
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace sickfuse::cli
