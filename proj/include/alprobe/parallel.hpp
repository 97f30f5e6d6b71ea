#pragma once

#include <cstddef>
#include <functional>

namespace alp {

// Worker count for a request of `requested` threads (0 means all hardware
// threads). The ALPROBE_THREADS environment variable caps the result.
int resolve_thread_count(int requested);

// Runs fn(i) for i in [0, count) on up to `threads` workers. Work items are
// handed out dynamically, so fn must only write to storage owned by item i.
// Exceptions thrown by fn are rethrown on the calling thread.
void parallel_for(size_t count, int threads, const std::function<void(size_t)> &fn);

} // namespace alp
