// Built-in execution worker speaking nv/1 on stdin/stdout.
//   nvarena-stubworker --serve

#include <cstring>
#include <iostream>

#include "nv/arena.hpp"

int main(int argc, char** argv) {
  if (argc < 2 || std::strcmp(argv[1], "--serve") != 0) {
    std::cerr << "usage: " << argv[0] << " --serve\n";
    return 1;
  }
  std::ios::sync_with_stdio(false);
  return nv::stub_serve(std::cin, std::cout);
}
