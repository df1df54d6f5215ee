#include <iostream>

#include "depthmup/cli.hpp"

int main(int argc, char** argv) { return depthmup::run_cli(argc, argv, std::cout, std::cerr); }
