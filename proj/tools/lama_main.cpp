#include "lama/cli.hpp"

int main(int argc, char** argv) {
  return lama::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
