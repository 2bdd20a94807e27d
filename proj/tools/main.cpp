#include <iostream>

#include "trex_cli/commands.hpp"

int main(int argc, char** argv) { return trex::cli::run_cli(argc, argv, std::cout, std::cerr); }
