#pragma once

#include <cstdint>
#include <functional>

namespace secokd::numerics {

// Process-wide worker count for data-parallel loops. Defaults to the hardware
// concurrency (capped at 16) and can be overridden via set_worker_count or the
// SECOKD_WORKERS environment variable.
int worker_count();
void set_worker_count(int n);

// Runs body over [0, n) split into contiguous chunks. Each index is handled by
// exactly one invocation, so results are independent of the worker count as
// long as chunks write disjoint outputs. Nested calls run inline on the
// calling thread.
void parallel_for(std::int64_t n, const std::function<void(std::int64_t, std::int64_t)>& body);

}  // namespace secokd::numerics
