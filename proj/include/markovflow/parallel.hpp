#pragma once

#include <cstddef>
#include <functional>

namespace markovflow {

/// Worker count: MARKOVFLOW_THREADS when set and positive, else the hardware count.
unsigned thread_count();

/// Runs body(begin, end) over contiguous chunks of [0, n) on up to thread_count() threads.
void parallel_for(std::size_t n, const std::function<void(std::size_t, std::size_t)>& body);

}  // namespace markovflow
