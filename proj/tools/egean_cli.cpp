#include <string>
#include <vector>

#include "egean/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return egean::cli::run(args);
}
