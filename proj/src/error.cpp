#include "opbounds/error.hpp"

namespace opbounds {

std::string_view category_name(ErrorCategory c) noexcept {
    switch (c) {
        case ErrorCategory::input: return "input";
        case ErrorCategory::numeric: return "numeric";
        case ErrorCategory::domain: return "domain";
        case ErrorCategory::not_psd: return "not_psd";
        case ErrorCategory::degenerate: return "degenerate";
        case ErrorCategory::non_injective: return "non_injective";
        case ErrorCategory::refinement_order: return "refinement_order";
        case ErrorCategory::unbounded_loss: return "unbounded_loss";
        case ErrorCategory::config: return "config";
        case ErrorCategory::io: return "io";
    }
    return "unknown";
}

int category_exit_code(ErrorCategory c) noexcept {
    switch (c) {
        case ErrorCategory::config: return 2;
        case ErrorCategory::io: return 3;
        case ErrorCategory::input: return 10;
        case ErrorCategory::domain: return 11;
        case ErrorCategory::not_psd: return 12;
        case ErrorCategory::degenerate: return 13;
        case ErrorCategory::non_injective: return 14;
        case ErrorCategory::refinement_order: return 15;
        case ErrorCategory::unbounded_loss: return 16;
        case ErrorCategory::numeric: return 20;
    }
    return 1;
}

}  // namespace opbounds
