// Copyright Contributors to the omnisplat Project
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string>
#include <vector>

namespace omnisplat {

// Command-line entry point (render / train / gradcheck / bench / synth).
// Returns 0 on success, 1 on operational failure, 2 on usage errors.
int run_cli(const std::vector<std::string>& args);

}  // namespace omnisplat
