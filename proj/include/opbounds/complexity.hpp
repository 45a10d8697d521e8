#pragma once

#include <cstdint>
#include <vector>

#include "opbounds/erm.hpp"
#include "opbounds/kernels.hpp"

namespace opbounds {

struct McConfig {
    int draws = 10000;
    std::uint64_t seed = 0;
    /// Enumerate all 2^{nm} sign patterns instead of sampling when nm <= 16.
    bool exact_when_small = true;

    void validate() const;
};

struct McEstimate {
    double estimate = 0.0;
    double standard_error = 0.0;
    int draws = 0;
    bool exact = false;
};

/// Sign vector for one draw, laid out as sigma[i m + j]. Shared by every estimator
/// so coupled quantities see the same draws.
Vector rademacher_draw(std::uint64_t seed, std::uint64_t draw, Eigen::Index length);

/// Empirical Rademacher complexity of the unit ball of the vvRKHS with Gram G_K:
/// (1/n) E sqrt(sigma^T G_K sigma).
McEstimate rademacher_ball_mc(const Matrix& gram_op, int n, const McConfig& cfg);

/// Exact expectation over all 2^{nm} sign patterns (nm <= 24).
double rademacher_ball_exact(const Matrix& gram_op, int n);

/// sqrt(kappa Tr(M) / n)
double trace_bound(double kappa, double trM, int n);

/// Finite class given by its values: values[k] is the n x m matrix of f_k(x_i).
McEstimate rademacher_class_mc(const std::vector<Matrix>& values, const McConfig& cfg);

/// Convenience overload evaluating predictors on the data first.
McEstimate rademacher_class_mc(const std::vector<Predictor>& predictors, const PointSet& data, int m,
                               const McConfig& cfg);

}  // namespace opbounds
