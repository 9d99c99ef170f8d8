#include <iostream>
#include <string>
#include <vector>

#include "imgsearch/cli.hpp"

int main(int argc, char** argv) {
    std::vector<std::string> args(argv + 1, argv + argc);
    return imgsearch::run_cli(args, std::cout, std::cerr);
}
