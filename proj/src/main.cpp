#include <iostream>

#include "sobemp/cli.hpp"

int main(int argc, char** argv) {
    return sobemp::cli::cli_main(argc, argv, std::cout, std::cerr);
}
