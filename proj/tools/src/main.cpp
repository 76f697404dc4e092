#include <iostream>

#include "promptseg_app/cli.hpp"

int main(int argc, char** argv) {
  return promptseg::app::run_cli({argv + 1, argv + argc}, std::cout, std::cerr);
}
