#include <iostream>

#include "cli.hpp"
#include "dmrs/kernels/kernels.hpp"

int main(int argc, char** argv) {
  dmrs::kernels::configure_threads_from_env();
  std::vector<std::string> args(argv + 1, argv + argc);
  return dmrs::cli::dispatch(args, std::cout, std::cerr);
}
