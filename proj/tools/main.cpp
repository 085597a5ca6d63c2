#include <iostream>

#include "nclkit/cli.hpp"

int main(int argc, char** argv) { return nclkit::cli::run(argc, argv, std::cout, std::cerr); }
