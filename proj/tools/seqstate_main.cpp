#include <iostream>

#include "seqstate/cli/pipeline.hpp"
#include "seqstate/runtime.hpp"

int main(int argc, char** argv) {
  seqstate::tune_allocator();
  return seqstate::cli::run(argc, argv, std::cout, std::cerr);
}
