#include <iostream>

#include "clipsplat/cli/cli.hpp"

int main(int argc, char** argv) {
    return clipsplat::cli::run(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
