#pragma once

#include <cstddef>
#include <functional>

namespace dpsvd {

// Worker count: an explicit override if set, else DPSVD_THREADS, else the
// hardware concurrency.
std::size_t thread_count();
// 0 clears the override.
void set_thread_count(std::size_t n);

// Runs body(i) for i in [0, n). Jobs write only to their own slot, so results
// do not depend on the schedule. Calls made from inside a worker run inline.
// The first exception thrown by any job is rethrown after all workers join.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace dpsvd
