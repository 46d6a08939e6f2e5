#include <iostream>
#include <string>
#include <vector>

#include "smallbench/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return smallbench::cli_dispatch(args, std::cout, std::cerr);
}
