#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "opbounds/linalg.hpp"

namespace opbounds {

enum class KernelFamily { gaussian, matern, sobolev_radial };

std::string_view family_name(KernelFamily f);
KernelFamily parse_kernel_family(std::string_view name);

/// Radial scalar kernel.
///
/// - gaussian:       amplitude * exp(-bandwidth * r^2)  (bandwidth is the precision gamma)
/// - matern:         amplitude * 2^{1-nu}/Gamma(nu) * (sqrt(2 nu) r/l)^nu K_nu(sqrt(2 nu) r/l),
///                   nu = smoothness, l = bandwidth
/// - sobolev_radial: reproducing kernel of H^s(R^d) under the Fourier norm
///                   int (1+|w|^2)^s |f^|^2 dw, evaluated at r/l:
///                   amplitude * (2 pi)^{-d/2} 2^{1-s}/Gamma(s) * rho^{s-d/2} K_{s-d/2}(rho)
///                   with s = smoothness; requires s > d/2.
struct ScalarKernelSpec {
    KernelFamily family = KernelFamily::gaussian;
    double bandwidth = 1.0;
    double smoothness = 0.0;
    int dimension = 1;
    double amplitude = 1.0;

    void validate() const;

    /// k(x, x); the maximum of every supported family.
    [[nodiscard]] double diagonal() const;

    /// Kernel value as a function of the Euclidean distance.
    [[nodiscard]] double radial(double r) const;
};

/// Symmetric PSD output matrix M of a decomposable kernel K = k * M.
class OutputMatrix {
public:
    OutputMatrix() = default;
    explicit OutputMatrix(Matrix m);

    static OutputMatrix identity(int m) { return OutputMatrix(Matrix::Identity(m, m)); }

    [[nodiscard]] const Matrix& matrix() const noexcept { return m_; }
    [[nodiscard]] int dim() const noexcept { return static_cast<int>(m_.rows()); }
    [[nodiscard]] double trace() const { return m_.trace(); }
    [[nodiscard]] double opnorm() const;

private:
    Matrix m_;
};

/// Ordered points in R^d, one per row.
class PointSet {
public:
    PointSet() = default;
    explicit PointSet(Matrix rows);

    [[nodiscard]] const Matrix& rows() const noexcept { return x_; }
    [[nodiscard]] int size() const noexcept { return static_cast<int>(x_.rows()); }
    [[nodiscard]] int dim() const noexcept { return static_cast<int>(x_.cols()); }
    [[nodiscard]] Vector point(int i) const { return x_.row(i).transpose(); }

private:
    Matrix x_;
};

struct DecomposableKernel {
    ScalarKernelSpec scalar;
    OutputMatrix output;
    double kappa = 1.0;

    /// Builds a kernel whose kappa is k(x, x).
    static DecomposableKernel with_default_kappa(ScalarKernelSpec scalar, OutputMatrix output);

    [[nodiscard]] int output_dim() const noexcept { return output.dim(); }
};

double eval_scalar(const ScalarKernelSpec& spec, const Eigen::Ref<const Vector>& x,
                   const Eigen::Ref<const Vector>& y);

/// Cross Gram k(a_i, b_j).
Matrix cross_gram(const ScalarKernelSpec& spec, const PointSet& a, const PointSet& b);

/// n x n Gram G_k; symmetric by construction.
Matrix gram_scalar(const ScalarKernelSpec& spec, const PointSet& pts);

/// G_k checked against kernel.kappa on the diagonal.
Matrix gram_scalar(const DecomposableKernel& kernel, const PointSet& pts);

/// nm x nm Gram G_K = G_k (x) M with entry (i m + j, i' m + j') = G_k[i,i'] M[j,j'].
Matrix gram_operator(const DecomposableKernel& kernel, const PointSet& pts);

/// sum_j k(x, anchor_j) M alpha_j, alpha_j the j-th row of coeffs.
Vector predict_expansion(const DecomposableKernel& kernel, const PointSet& anchors, const Matrix& coeffs,
                         const Eigen::Ref<const Vector>& x);

/// Row i holds the expansion evaluated at query point i.
Matrix predict_expansion(const DecomposableKernel& kernel, const PointSet& anchors, const Matrix& coeffs,
                         const PointSet& queries);

/// H^s(R^d) norm of exp(-|x|^2) by adaptive radial quadrature.
double sobolev_norm_gaussian(int d, double s);

}  // namespace opbounds
