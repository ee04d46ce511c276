#include <iostream>

#include "dgp_cli/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return dgp::cli::cli_main(args, std::cout, std::cerr);
}
