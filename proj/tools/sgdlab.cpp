#include <iostream>

#include "sgdlab/commands.hpp"

int main(int argc, char** argv) { return sgdlab::run_cli(argc, argv, std::cout, std::cerr); }
