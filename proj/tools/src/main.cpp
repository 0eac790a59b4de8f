#include <iostream>

#include "d3pr_cli/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return d3pr::cli::run(args, std::cout, std::cerr);
}
