#include <iostream>
#include <string>
#include <vector>

#include "rfpca/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return rfpca::run_cli(args, std::cout, std::cerr);
}
