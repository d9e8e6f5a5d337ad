// SPDX-License-Identifier: Apache-2.0
#include <iostream>

#include "distilla/cli/commands.hpp"

int main(int argc, char** argv) {
    return distilla::cli::run_cli(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
