#include <iostream>
#include <string>
#include <vector>

#include "hetero_cli/cli.hpp"

int main(int argc, char** argv) {
  return hetero::cli::run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
