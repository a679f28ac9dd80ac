#include <iostream>

#include "retinareg_cli/cli.hpp"

int main(int argc, char** argv) { return retinareg::cli::run(argc, argv, std::cout, std::cerr); }
