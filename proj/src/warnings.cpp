#include "opbounds/warnings.hpp"

#include <utility>

namespace opbounds {

namespace {
thread_local std::vector<std::string> g_pending;
}

void warn(std::string message) { g_pending.push_back(std::move(message)); }

std::vector<std::string> drain_warnings() {
    std::vector<std::string> out;
    out.swap(g_pending);
    return out;
}

std::size_t pending_warnings() { return g_pending.size(); }

}  // namespace opbounds
