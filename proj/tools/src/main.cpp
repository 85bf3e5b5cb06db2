#include <iostream>

#include "rfn/cli.hpp"

int main(int argc, char** argv) { return rfn::cli::run(argc, argv, std::cout, std::cerr); }
