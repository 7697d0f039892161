#include "seqstate/runtime.hpp"

#include <cstdlib>  // defines __GLIBC__ on glibc

#if defined(__GLIBC__)
#include <malloc.h>
#endif

namespace seqstate {

void tune_allocator() {
#if defined(__GLIBC__)
  // Serve everything from the main heap and never hand freed memory back,
  // so a peak-sized buffer is paid for once per process.
  mallopt(M_MMAP_MAX, 0);
  mallopt(M_TRIM_THRESHOLD, 1 << 30);
  mallopt(M_TOP_PAD, 64 << 20);
#endif
}

}  // namespace seqstate
