#include "opbounds/linalg.hpp"

#include <algorithm>
#include <numeric>
#include <vector>

namespace opbounds {

SymmetricEigen symmetric_eigen(const Matrix& a) {
    const Matrix sym = 0.5 * (a + a.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> solver(sym);
    const Vector& vals = solver.eigenvalues();
    const Matrix& vecs = solver.eigenvectors();
    const auto n = vals.size();
    SymmetricEigen out{Vector(n), Matrix(n, n)};
    // Eigen returns ascending order.
    for (Eigen::Index i = 0; i < n; ++i) {
        out.values(i) = vals(n - 1 - i);
        out.vectors.col(i) = vecs.col(n - 1 - i);
    }
    return out;
}

double spectral_norm(const Matrix& a) {
    if (a.size() == 0) return 0.0;
    Eigen::JacobiSVD<Matrix> svd(a);
    return svd.singularValues()(0);
}

double min_eigenvalue(const Matrix& symmetric) {
    if (symmetric.size() == 0) return 0.0;
    const Matrix sym = 0.5 * (symmetric + symmetric.transpose());
    Eigen::SelfAdjointEigenSolver<Matrix> solver(sym, Eigen::EigenvaluesOnly);
    return solver.eigenvalues()(0);
}

bool is_psd(const Matrix& symmetric, double tol) { return min_eigenvalue(symmetric) >= -tol; }

Matrix kronecker(const Matrix& a, const Matrix& b) {
    Matrix out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j)
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
    return out;
}

}  // namespace opbounds
