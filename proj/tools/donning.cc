#include <iostream>
#include <string>
#include <vector>

#include "donning/cli.h"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return donning::RunCli(args, std::cout, std::cerr);
}
