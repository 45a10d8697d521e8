#pragma once

#include <optional>
#include <string_view>
#include <vector>

#include "opbounds/linalg.hpp"

namespace opbounds {

enum class LossFamily { squared, huber, pinball };

std::string_view loss_name(LossFamily f);
LossFamily parse_loss_family(std::string_view name);

/// Vector losses are sums over output coordinates of u = z - y:
///   squared  u^2
///   huber    u^2/2 for |u| <= delta, delta(|u| - delta/2) otherwise
///   pinball  max(tau u, (tau - 1) u)
struct LossSpec {
    LossFamily family = LossFamily::squared;
    double huber_delta = 1.0;
    std::vector<double> quantiles;

    void validate(int m) const;
};

double loss_value(const LossSpec& spec, const Eigen::Ref<const Vector>& z, const Eigen::Ref<const Vector>& y);

/// Pinball kinks take the lower branch tau - 1; huber is differentiable.
Vector loss_subgradient(const LossSpec& spec, const Eigen::Ref<const Vector>& z, const Eigen::Ref<const Vector>& y);

/// Euclidean Lipschitz constant in z for outputs in R^m; nullopt for the squared loss.
std::optional<double> lipschitz_constant(const LossSpec& spec, int m);

}  // namespace opbounds
