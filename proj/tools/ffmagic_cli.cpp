#include <vector>

#include "ffmagic/harness.hpp"

int main(int argc, char** argv) {
  return ffmagic::run_cli(std::vector<std::string>(argv + 1, argv + argc));
}
