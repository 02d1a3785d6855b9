// Copyright Contributors to the omnisplat Project
// SPDX-License-Identifier: Apache-2.0

#include <vector>

#include "omnisplat/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return omnisplat::run_cli(args);
}
