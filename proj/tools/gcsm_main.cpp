#include "gcsm/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return gcsm::run_cli(argc, argv, std::cout, std::cerr); }
