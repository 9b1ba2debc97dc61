#pragma once

#include <cstddef>
#include <functional>

namespace mvts {

/// hardware_concurrency(), capped by MVTS_THREADS when set (minimum 1).
std::size_t worker_threads();

/// Run body(i) for i in [0, count) on up to `threads` workers, contiguous
/// chunks per worker. Exceptions are rethrown on the calling thread.
void parallel_for(std::size_t count, std::size_t threads, const std::function<void(std::size_t)>& body);

/// Keeps large freed blocks in the heap instead of returning them to the OS.
/// Autodiff graphs allocate and free the same large buffers every step; with
/// glibc's default thresholds each one is a fresh mmap. No-op elsewhere.
void configure_allocator();

}  // namespace mvts
