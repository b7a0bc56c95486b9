#include <string>
#include <vector>

#include "qsym/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return qsym::run_cli(std::move(args));
}
