#include <iostream>

#include "gazetrace/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return gazetrace::cli::run(args, std::cout, std::cerr);
}
