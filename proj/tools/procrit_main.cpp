#include <iostream>
#include <string>
#include <vector>

#include "procrit/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return procrit::run_cli(args, std::cout, std::cerr);
}
