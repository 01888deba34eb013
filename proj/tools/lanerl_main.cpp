#include <iostream>

#include "lanerl/cli.hpp"

int main(int argc, char **argv) {
  return lanerl::run_cli({argv + 1, argv + argc}, std::cout, std::cerr);
}
