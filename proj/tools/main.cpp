#include <iostream>

#include "mlharness/cli.hpp"

int main(int argc, char** argv) { return mlh::run_cli(argc, argv, std::cout, std::cerr); }
