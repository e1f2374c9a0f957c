#pragma once

// Heap accounting for the acceptance binary. alloc_counter.cpp replaces the
// C allocation functions, so Eigen's buffers are seen as well as operator new.

#include <cstddef>

namespace gramdyn::testing {

struct AllocWindow {
  long long peak_bytes = 0;   // highest live heap above the level at begin()
  long long peak_large = 0;   // most simultaneously live blocks >= the large threshold
  long long large_blocks = 0; // large blocks allocated inside the window
  long long calls = 0;
};

/// Starts a measurement window; blocks of at least `large` bytes are counted
/// separately.
void alloc_window_begin(std::size_t large);
AllocWindow alloc_window_end();

}  // namespace gramdyn::testing
