#include <malloc.h>

#include "dhan/cli.hpp"

int main(int argc, char** argv) {
  // Training allocates and frees multi-megabyte activations every step;
  // keep them on the heap instead of a fresh mmap each time.
  mallopt(M_MMAP_THRESHOLD, 1 << 25);  // the largest value glibc accepts
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  return dhan::run_cli(argc, argv);
}
