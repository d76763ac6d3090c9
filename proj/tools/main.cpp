#include <iostream>
#include <string>
#include <vector>

#include "unisparse/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv, argv + argc);
  return unisparse::run(args, std::cout, std::cerr);
}
