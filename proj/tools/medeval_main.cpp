#include <iostream>

#include "medeval/cli.hpp"

int main(int argc, char** argv) {
  return medeval::cli::run_command({argv + 1, argv + argc}, std::cout, std::cerr);
}
