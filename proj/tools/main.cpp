#include <string>
#include <vector>

#include "corrimpact/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return corrimpact::cli::run(args);
}
