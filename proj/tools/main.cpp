#include <iostream>

#include "v6recon/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv, argv + argc);
    return v6recon::cli::run(args, std::cout, std::cerr);
}
