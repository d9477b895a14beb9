#include <iostream>
#include <string>
#include <vector>

#include "robmrag/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return robmrag::cli_main(args, std::cout, std::cerr);
}
