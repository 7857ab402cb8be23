#include <string>
#include <vector>

#include "nast/commands.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return nast::run_command(args);
}
