#pragma once

#include <cstddef>
#include <functional>

namespace specklenet {

/// Worker cap used by parallel_for. 0 means "use SPECKLENET_THREADS or 1".
void set_thread_count(unsigned n);
unsigned thread_count();

/// Runs body(i) for i in [0, n). Iterations are statically partitioned into
/// contiguous chunks, so work assignment never depends on timing. The body
/// must only write to per-index state.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace specklenet
