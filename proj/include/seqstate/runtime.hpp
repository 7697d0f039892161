#pragma once

namespace seqstate {

// Keeps large temporaries on the heap instead of mapping fresh pages for each
// one. Training allocates many short-lived matrices of a few hundred KB to
// ~100 MB, and first-touch page faults otherwise dominate the arithmetic.
// Call once at program start; a no-op outside glibc.
void tune_allocator();

}  // namespace seqstate
