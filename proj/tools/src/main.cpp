#include <iostream>

#include "flexpe_cli/cli.hpp"

int main(int argc, char** argv) {
    return flexpe::cli::run({argv + 1, argv + argc}, std::cout, std::cerr);
}
