#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace opbounds {

// Machine-readable failure categories. The CLI maps these to exit codes.
enum class ErrorCategory {
    input,
    numeric,
    domain,
    not_psd,
    degenerate,
    non_injective,
    refinement_order,
    unbounded_loss,
    config,
    io,
};

std::string_view category_name(ErrorCategory c) noexcept;
int category_exit_code(ErrorCategory c) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorCategory category, const std::string& message)
        : std::runtime_error(message), category_(category) {}

    [[nodiscard]] ErrorCategory category() const noexcept { return category_; }

private:
    ErrorCategory category_;
};

[[noreturn]] inline void fail(ErrorCategory c, const std::string& message) { throw Error(c, message); }

inline void require(bool condition, ErrorCategory c, const std::string& message) {
    if (!condition) fail(c, message);
}

}  // namespace opbounds
