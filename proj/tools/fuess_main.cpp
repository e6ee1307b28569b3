#include <iostream>

#include "fuess/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return fuess::run_cli(args, std::cout, std::cerr);
}
