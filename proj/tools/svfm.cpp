#include <iostream>
#include <string>
#include <vector>

#include "svfm/cli.hpp"

int main(int argc, char** argv) {
    return svfm::cli_main(std::vector<std::string>(argv, argv + argc), std::cout, std::cerr);
}
