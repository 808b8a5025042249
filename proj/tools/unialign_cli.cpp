#include <iostream>

#include "unialign/cli/commands.hpp"

int main(int argc, char** argv) { return unialign::cli::run_cli(argc, argv, std::cout, std::cerr); }
