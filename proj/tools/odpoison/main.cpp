#include <iostream>
#include <string>
#include <vector>

#include "odp/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return odp::cli::run(args, std::cout, std::cerr);
}
