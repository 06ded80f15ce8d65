#include <iostream>

#include "dmt_cli/cli.hpp"

int main(int argc, char** argv) { return dmt::cli::run(argc, argv, std::cout, std::cerr); }
