#include <iostream>

#include "kiloland/cli.hpp"

int main(int argc, char** argv) { return kiloland::cli::dispatch(argc, argv, std::cout, std::cerr); }
