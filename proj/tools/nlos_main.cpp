#include "nlos/cli.hpp"

#include <iostream>

int main(int argc, char** argv) { return nlos::run_cli(argc, argv, std::cout, std::cerr); }
