#include <iostream>

#include "fit/cli.hpp"

int main(int argc, char** argv) { return fit::run_cli(argc, argv, std::cout, std::cerr); }
