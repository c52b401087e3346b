#pragma once

#include <cstddef>
#include <functional>

namespace rabi {

/// Worker count: RABI_THREADS when set to a positive integer, otherwise the
/// hardware concurrency.
std::size_t thread_count();

/// Calls body(i) for i in [0, n) on up to thread_count() threads. Work items
/// must write to disjoint outputs. If items throw, remaining work is skipped
/// and the exception from the lowest failing index that ran is rethrown.
void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body);

}  // namespace rabi
