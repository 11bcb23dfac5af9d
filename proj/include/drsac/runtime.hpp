#pragma once

namespace drsac {

/// Keeps freed matrix buffers in the heap instead of returning them to the
/// OS after every op (glibc otherwise maps and unmaps each large block).
/// Safe to call more than once; no-op on other C libraries.
void tune_allocator();

}  // namespace drsac
