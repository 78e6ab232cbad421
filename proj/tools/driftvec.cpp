#include <iostream>

#include "driftvec/commands.hpp"

int main(int argc, char** argv) { return driftvec::run_cli(argc, argv, std::cout, std::cerr); }
