// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include "hanet_cli/cli.hpp"

int main(int argc, char** argv) {
  return hanet::cli::run(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
