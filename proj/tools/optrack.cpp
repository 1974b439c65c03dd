#include <iostream>

#include "optrack/cli.hpp"

int main(int argc, char** argv) { return optrack::run_cli(argc, argv, std::cout, std::cerr); }
