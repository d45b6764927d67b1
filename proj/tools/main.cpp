#include <iostream>
#include <vector>

#include "pyraflow/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return pyraflow::cli_main(args, std::cout, std::cerr);
}
