// SPDX-License-Identifier: Apache-2.0
#include <iostream>
#include <string>
#include <vector>

#include "vittle/cli.hpp"
#include "vittle/platform.hpp"

int main(int argc, char** argv) {
  vittle::tune_allocator();
  return vittle::cli::run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
