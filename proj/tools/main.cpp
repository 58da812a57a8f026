#include <iostream>

#include "refpaint/cli.hpp"

int main(int argc, char** argv) {
    return refpaint::run_cli(argc, argv, std::cout, std::cerr);
}
