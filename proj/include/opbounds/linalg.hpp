#pragma once

#include <Eigen/Dense>

namespace opbounds {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Symmetric eigendecomposition with eigenvalues sorted in descending order.
struct SymmetricEigen {
    Vector values;   // descending
    Matrix vectors;  // columns match values
};

SymmetricEigen symmetric_eigen(const Matrix& a);

/// Largest singular value; 0 for empty matrices.
double spectral_norm(const Matrix& a);

double min_eigenvalue(const Matrix& symmetric);

/// True when the symmetric part's smallest eigenvalue is >= -tol.
bool is_psd(const Matrix& symmetric, double tol);

Matrix kronecker(const Matrix& a, const Matrix& b);

}  // namespace opbounds
