#include <iostream>
#include <string>
#include <vector>

#include "probetraj/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return probetraj::cli::run(args, std::cout, std::cerr);
}
