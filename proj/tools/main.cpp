#include <iostream>
#include <string>
#include <vector>

#include "rail/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return rail::command_dispatch(args, std::cout, std::cerr);
}
