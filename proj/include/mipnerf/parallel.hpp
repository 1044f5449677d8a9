#pragma once

#include <cstddef>
#include <functional>

namespace mipnerf {

/// Worker cap for library-level parallel loops (the CLI's --threads). 0 means
/// hardware concurrency.
void set_thread_count(int threads);
int thread_count();

/// Calls body(i) for every i in [0, count). Work items must be independent; the
/// assignment of items to threads never affects results.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

}  // namespace mipnerf
