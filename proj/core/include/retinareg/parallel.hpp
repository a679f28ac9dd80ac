#pragma once

#include <cstddef>
#include <functional>

namespace retinareg {

/// Worker count used by parallel_for. Defaults to the RETINAREG_THREADS
/// environment variable, else hardware concurrency.
std::size_t thread_count();

/// Overrides the worker count for the current process; 0 restores the default.
void set_thread_count(std::size_t n);

/// Runs fn(i) for i in [0, n). Work is split into contiguous blocks; fn must
/// only write state owned by index i so results do not depend on the split.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& fn);

}  // namespace retinareg
