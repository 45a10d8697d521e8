#pragma once

#include <cmath>
#include <cstdint>

#include "opbounds/kernels.hpp"
#include "opbounds/rng.hpp"

namespace testutil {

using opbounds::Matrix;
using opbounds::Vector;

inline Matrix random_matrix(std::uint64_t seed, int rows, int cols, double sd = 1.0) {
    const opbounds::CounterRng rng(seed, 901);
    Matrix m(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) m(i, j) = sd * rng.gaussian(static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(j));
    return m;
}

inline Matrix random_psd(std::uint64_t seed, int n, double ridge = 0.0) {
    const Matrix a = random_matrix(seed, n, n);
    return a * a.transpose() / n + ridge * Matrix::Identity(n, n);
}

inline opbounds::PointSet random_points(std::uint64_t seed, int n, int d, double scale = 1.0) {
    const opbounds::CounterRng rng(seed, 902);
    Matrix x(n, d);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < d; ++j) x(i, j) = rng.uniform(-scale, scale, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(j));
    return opbounds::PointSet(x);
}

inline double rel_err(double a, double b) { return std::abs(a - b) / std::max(1e-300, std::max(std::abs(a), std::abs(b))); }

}  // namespace testutil
