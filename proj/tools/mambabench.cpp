#include <iostream>

#include "mamba/cli.hpp"

int main(int argc, char** argv) {
  return mamba::run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
