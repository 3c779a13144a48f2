#include <iostream>

#include "dsgnn/cli/commands.hpp"

int main(int argc, char** argv) { return dsgnn::cli::run(argc, argv, std::cout, std::cerr); }
