#include <iostream>

#include "npmix/cli.hpp"

int main(int argc, char** argv) { return npmix::run_cli(argc, argv, std::cout, std::cerr); }
