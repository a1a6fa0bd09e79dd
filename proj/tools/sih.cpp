#include <iostream>

#include "sih/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return sih::run_command(args, std::cout, std::cerr);
}
