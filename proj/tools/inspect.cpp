#include <iostream>

#include "insp/cli.hpp"

int main(int argc, char** argv) { return insp::cli::run(argc, argv, std::cout, std::cerr); }
