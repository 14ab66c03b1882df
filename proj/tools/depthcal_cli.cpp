#include <iostream>

#include "depthcal/cli_commands.hpp"

int main(int argc, char** argv) { return depthcal::run_cli(argc, argv, std::cout, std::cerr); }
