#include "opbounds/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "opbounds/error.hpp"

namespace opbounds {

SpectralDecomposition eigendecompose_scaled_gram(const Matrix& gram, int n) {
    require(gram.rows() == gram.cols() && gram.rows() == n && n >= 1, ErrorCategory::input,
            "scaled Gram must be n x n with n >= 1");
    const Matrix scaled = gram / static_cast<double>(n);
    require((scaled - scaled.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * std::max(1.0, scaled.cwiseAbs().maxCoeff()),
            ErrorCategory::input, "Gram matrix is not symmetric");
    SymmetricEigen eig = symmetric_eigen(scaled);
    for (Eigen::Index i = 0; i < eig.values.size(); ++i) {
        if (eig.values(i) < 0.0) {
            if (eig.values(i) < -1e-10) {
                std::ostringstream os;
                os << "scaled Gram is not PSD: eigenvalue " << eig.values(i);
                fail(ErrorCategory::not_psd, os.str());
            }
            eig.values(i) = 0.0;
        }
    }
    return SpectralDecomposition{std::move(eig.vectors), std::move(eig.values)};
}

double critical_psi(const Vector& mu, double delta) {
    const double d2 = delta * delta;
    double acc = 0.0;
    for (Eigen::Index i = 0; i < mu.size(); ++i) acc += std::min(d2, mu(i));
    return std::sqrt(acc / static_cast<double>(mu.size()));
}

double critical_radius(const Vector& mu) {
    require(mu.size() >= 1, ErrorCategory::input, "critical radius needs at least one eigenvalue");
    require((mu.array() >= 0.0).all(), ErrorCategory::input, "eigenvalues must be nonnegative");
    const double top = mu.maxCoeff();
    if (top == 0.0) return 0.0;
    // psi(delta)/delta is nonincreasing, so {delta > 0 : psi(delta) <= delta^2} is a half-line.
    double lo = 0.0;
    double hi = std::max(1.0, std::sqrt(top));
    while (hi - lo > 1e-10) {
        const double mid = 0.5 * (lo + hi);
        if (mid > 0.0 && critical_psi(mu, mid) <= mid * mid)
            hi = mid;
        else
            lo = mid;
    }
    return hi * hi;
}

int statistical_dimension(const Vector& mu, double delta_sq) {
    for (Eigen::Index j = 0; j < mu.size(); ++j)
        if (mu(j) <= delta_sq) return static_cast<int>(j) + 1;
    return static_cast<int>(mu.size());
}

bool satisfiability_verdict(double norm1, double norm2, double c, double delta_sq) {
    return norm1 <= 0.5 && norm2 <= c * std::sqrt(delta_sq);
}

SpectralReport check_satisfiability(const SketchMatrix& s, const SpectralDecomposition& dec, int d_n, double delta_sq,
                                    double c) {
    const auto n = static_cast<int>(dec.U.rows());
    require(s.cols() == n, ErrorCategory::input, "sketch column count must equal n");
    require(d_n >= 1 && d_n <= n, ErrorCategory::input, "statistical dimension out of range [1, n]");
    const Matrix su = s.apply(dec.U);
    const Matrix su1 = su.leftCols(d_n);
    SpectralReport r;
    r.delta_sq = delta_sq;
    r.d_n = d_n;
    r.c_used = c;
    r.norm1 = spectral_norm(su1.transpose() * su1 - Matrix::Identity(d_n, d_n));
    if (d_n < n) {
        const Vector root = dec.mu.tail(n - d_n).cwiseSqrt();
        r.norm2 = spectral_norm(su.rightCols(n - d_n) * root.asDiagonal());
    }
    r.satisfiable = satisfiability_verdict(r.norm1, r.norm2, c, delta_sq);
    return r;
}

PencilSolution solve_pencil(const Matrix& top, const Matrix& bottom) {
    require(top.rows() == top.cols() && bottom.rows() == bottom.cols() && top.rows() == bottom.rows(),
            ErrorCategory::input, "pencil matrices must be square and equally sized");
    require(top.rows() >= 1, ErrorCategory::input, "pencil matrices must be nonempty");
    const SymmetricEigen b = symmetric_eigen(bottom);
    const double scale = b.values.cwiseAbs().maxCoeff();
    if (!(scale > 0.0)) fail(ErrorCategory::degenerate, "pencil bottom matrix is identically zero");
    const double cutoff = 1e-12 * scale;
    int rank = 0;
    while (rank < b.values.size() && b.values(rank) > cutoff) ++rank;
    // Whitening on range(bottom): W = V_r diag(lambda_r^{-1/2}).
    const Matrix w = b.vectors.leftCols(rank) * b.values.head(rank).cwiseSqrt().cwiseInverse().asDiagonal();
    const SymmetricEigen t = symmetric_eigen(w.transpose() * top * w);
    PencilSolution out;
    out.rank = rank;
    out.value = t.values(0);
    out.top_vector = w * t.vectors.col(0);
    out.gap = rank > 1 ? t.values(0) - t.values(1) : std::abs(t.values(0));
    return out;
}

double pencil_max(const Matrix& top, const Matrix& bottom) { return solve_pencil(top, bottom).value; }

}  // namespace opbounds
