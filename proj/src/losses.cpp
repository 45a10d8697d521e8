#include "opbounds/losses.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "opbounds/error.hpp"

namespace opbounds {

std::string_view loss_name(LossFamily f) {
    switch (f) {
        case LossFamily::squared: return "squared";
        case LossFamily::huber: return "huber";
        case LossFamily::pinball: return "pinball";
    }
    return "unknown";
}

LossFamily parse_loss_family(std::string_view name) {
    if (name == "squared") return LossFamily::squared;
    if (name == "huber") return LossFamily::huber;
    if (name == "pinball") return LossFamily::pinball;
    fail(ErrorCategory::input, "unknown loss family '" + std::string(name) + "'");
}

void LossSpec::validate(int m) const {
    if (family == LossFamily::huber)
        require(std::isfinite(huber_delta) && huber_delta > 0.0, ErrorCategory::input, "huber_delta must be positive");
    if (family == LossFamily::pinball) {
        require(static_cast<int>(quantiles.size()) == m, ErrorCategory::input,
                "pinball needs one quantile per output (" + std::to_string(m) + ")");
        for (double t : quantiles)
            require(t > 0.0 && t < 1.0, ErrorCategory::input, "pinball quantiles must lie in (0, 1)");
    }
}

namespace {
void check_dims(const LossSpec& spec, const Eigen::Ref<const Vector>& z, const Eigen::Ref<const Vector>& y) {
    require(z.size() == y.size(), ErrorCategory::input, "loss: prediction and target dimensions differ");
    spec.validate(static_cast<int>(z.size()));
}
}  // namespace

double loss_value(const LossSpec& spec, const Eigen::Ref<const Vector>& z, const Eigen::Ref<const Vector>& y) {
    check_dims(spec, z, y);
    double total = 0.0;
    for (Eigen::Index j = 0; j < z.size(); ++j) {
        const double u = z(j) - y(j);
        switch (spec.family) {
            case LossFamily::squared: total += u * u; break;
            case LossFamily::huber: {
                const double a = std::abs(u);
                total += a <= spec.huber_delta ? 0.5 * u * u : spec.huber_delta * (a - 0.5 * spec.huber_delta);
                break;
            }
            case LossFamily::pinball: {
                const double tau = spec.quantiles[static_cast<std::size_t>(j)];
                total += std::max(tau * u, (tau - 1.0) * u);
                break;
            }
        }
    }
    return total;
}

Vector loss_subgradient(const LossSpec& spec, const Eigen::Ref<const Vector>& z, const Eigen::Ref<const Vector>& y) {
    check_dims(spec, z, y);
    Vector g(z.size());
    for (Eigen::Index j = 0; j < z.size(); ++j) {
        const double u = z(j) - y(j);
        switch (spec.family) {
            case LossFamily::squared: g(j) = 2.0 * u; break;
            case LossFamily::huber: g(j) = std::clamp(u, -spec.huber_delta, spec.huber_delta); break;
            case LossFamily::pinball: {
                const double tau = spec.quantiles[static_cast<std::size_t>(j)];
                g(j) = u > 0.0 ? tau : tau - 1.0;
                break;
            }
        }
    }
    return g;
}

std::optional<double> lipschitz_constant(const LossSpec& spec, int m) {
    spec.validate(m);
    const double root_m = std::sqrt(static_cast<double>(m));
    switch (spec.family) {
        case LossFamily::squared: return std::nullopt;
        case LossFamily::huber: return spec.huber_delta * root_m;
        case LossFamily::pinball: {
            double worst = 0.0;
            for (double t : spec.quantiles) worst = std::max(worst, std::max(t, 1.0 - t));
            return worst * root_m;
        }
    }
    return std::nullopt;
}

}  // namespace opbounds
