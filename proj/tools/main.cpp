#include <iostream>

#include "kpmask/cli.hpp"

int main(int argc, char** argv) {
    return kpmask::dispatch(std::vector<std::string>(argv + 1, argv + argc), std::cout, std::cerr);
}
