#include <iostream>

#include "countsynth/cli.hpp"

int main(int argc, char** argv) { return countsynth::run_cli(argc, argv, std::cout, std::cerr); }
