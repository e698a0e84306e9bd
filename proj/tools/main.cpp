#include <iostream>

#include "msra/cli.hpp"

int main(int argc, char** argv) { return msra::cli::run(argc, argv, std::cout, std::cerr); }
