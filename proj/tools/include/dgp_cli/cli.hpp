#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dgp::cli {

enum ExitCode : int {
  kSuccess = 0,
  kUsageError = 1,
  kDataError = 2,
  kNumericalFailure = 3,
};

/// Runs one subcommand (train, predict, evaluate, check-grads). `args`
/// excludes the program name.
int cli_main(const std::vector<std::string>& args, std::ostream& out,
             std::ostream& err);

}  // namespace dgp::cli
