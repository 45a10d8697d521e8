#pragma once

#include <string>
#include <vector>

namespace opbounds {

// Non-fatal diagnostics raised by the numerical routines (degenerate ranges,
// solver non-convergence, gradient fallbacks). Collected per thread so the
// CLI can drain them into the result record in a deterministic order.
void warn(std::string message);
std::vector<std::string> drain_warnings();
std::size_t pending_warnings();

}  // namespace opbounds
