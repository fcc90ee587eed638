// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include "greedylr/cli.hpp"

int main(int argc, char** argv) {
  return greedylr::cli::main_entry(argc, argv, std::cout, std::cerr);
}
