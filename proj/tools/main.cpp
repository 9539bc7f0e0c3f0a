#include <iostream>
#include <string>
#include <vector>

#include "emsrl/cli.hpp"

int main(int argc, char** argv) {
  return emsrl::cli::run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
