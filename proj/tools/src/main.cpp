#include "rece_cli/commands.hpp"

#include <iostream>

int main(int argc, char** argv) { return rece::cli::run(argc, argv, std::cout, std::cerr); }
