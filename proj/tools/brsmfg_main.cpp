#include "brsmfg/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return brsmfg::run_cli(argc, argv, std::cout, std::cerr); }
