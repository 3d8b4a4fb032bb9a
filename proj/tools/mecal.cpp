#include <iostream>

#include "mecal/cli.hpp"

int main(int argc, char** argv) {
  return mecal::run_cli({argv + 1, argv + argc}, std::cout, std::cerr);
}
