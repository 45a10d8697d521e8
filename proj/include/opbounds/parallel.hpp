#pragma once

#include <cstddef>
#include <functional>

namespace opbounds {

/// Worker cap from OPBOUNDS_THREADS (unset or 0 = hardware concurrency).
std::size_t thread_count();

/// Override the worker cap for the current process (0 restores the env default).
void set_thread_count(std::size_t n);

/// Runs body(i) for i in [0, count). Each index is visited exactly once and
/// bodies must write to disjoint locations; no cross-index reductions happen
/// here, so results do not depend on the schedule.
void parallel_for(std::size_t count, const std::function<void(std::size_t)>& body);

}  // namespace opbounds
