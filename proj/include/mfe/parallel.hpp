#pragma once

#include <cstddef>
#include <functional>

namespace mfe {

/// Worker count used by parallel_for; 1 runs everything inline.
void set_thread_count(int n);
int thread_count();

/// Calls body(i) for i in [0, n) split into contiguous blocks. Each index is
/// visited exactly once, so writes to slot i are deterministic regardless of
/// the thread count. Reductions belong to the caller, after the loop.
void parallel_for(std::ptrdiff_t n, const std::function<void(std::ptrdiff_t)>& body);

}  // namespace mfe
