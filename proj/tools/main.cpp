#include <iostream>

#include "cli/commands.hpp"

int main(int argc, char** argv) { return bnf::cli::run_cli(argc, argv, std::cout, std::cerr); }
