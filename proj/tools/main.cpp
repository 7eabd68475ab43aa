#include <iostream>

#include "passforge/cli.hpp"

int main(int argc, char** argv) { return passforge::cli_main(argc, argv, std::cout, std::cerr); }
