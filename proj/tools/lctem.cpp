#include "lctem/cli.hpp"

int main(int argc, char** argv) {
  return lctem::cli::run(std::vector<std::string>(argv + 1, argv + argc));
}
