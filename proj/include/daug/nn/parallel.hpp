#pragma once

#include <functional>

namespace daug {

/// Worker count for intra-op parallelism; DAUG_THREADS caps it (default 1).
int thread_count();

/// Overrides the worker count for the current process (tests, CLI).
void set_thread_count(int threads);

/// Runs fn(i) for i in [0, n). Each index must write disjoint outputs so the
/// result does not depend on the worker count.
void parallel_for(int n, const std::function<void(int)>& fn);

}  // namespace daug
