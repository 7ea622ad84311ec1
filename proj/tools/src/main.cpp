#include <iostream>

#include "stripereid/cli/commands.hpp"

int main(int argc, char** argv) { return stripereid::cli::run(argc, argv, std::cout, std::cerr); }
