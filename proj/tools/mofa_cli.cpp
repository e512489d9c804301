#include <iostream>

#include "cli.hpp"

int main(int argc, char** argv) { return mofa::cli::run({argv, argv + argc}, std::cout, std::cerr); }
