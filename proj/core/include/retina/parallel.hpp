#pragma once

#include <cstddef>
#include <functional>

namespace retina {

/// Worker count used by every internally parallel operation (defaults to hardware concurrency).
void set_worker_count(std::size_t workers);
std::size_t worker_count() noexcept;

/// Calls body(i) for i in [0, count) across the worker pool. Each index runs exactly once;
/// callers keep results deterministic by writing only to per-index outputs.
/// The first exception thrown by any body is rethrown after all workers stop.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

}  // namespace retina
