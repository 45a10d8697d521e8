#include "opbounds/kernels.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

#include <boost/math/quadrature/exp_sinh.hpp>

#include "opbounds/error.hpp"
#include "opbounds/parallel.hpp"

namespace opbounds {

namespace {

bool all_finite(const Eigen::Ref<const Vector>& v) { return v.allFinite(); }

// x^nu K_nu(x) scaled so that the value at 0 is 1.
double matern_shape(double nu, double x) {
    if (x <= 0.0) return 1.0;
    if (nu == 0.5) return std::exp(-x);
    if (nu == 1.5) return (1.0 + x) * std::exp(-x);
    if (nu == 2.5) return (1.0 + x + x * x / 3.0) * std::exp(-x);
    const double k = std::cyl_bessel_k(nu, x);
    if (k == 0.0) return 0.0;
    return std::exp((1.0 - nu) * std::log(2.0) - std::lgamma(nu) + nu * std::log(x) + std::log(k));
}

}  // namespace

std::string_view family_name(KernelFamily f) {
    switch (f) {
        case KernelFamily::gaussian: return "gaussian";
        case KernelFamily::matern: return "matern";
        case KernelFamily::sobolev_radial: return "sobolev-radial";
    }
    return "unknown";
}

KernelFamily parse_kernel_family(std::string_view name) {
    if (name == "gaussian") return KernelFamily::gaussian;
    if (name == "matern") return KernelFamily::matern;
    if (name == "sobolev-radial") return KernelFamily::sobolev_radial;
    fail(ErrorCategory::input, "unknown kernel family '" + std::string(name) + "'");
}

void ScalarKernelSpec::validate() const {
    require(std::isfinite(bandwidth) && bandwidth > 0.0, ErrorCategory::input, "kernel bandwidth must be positive");
    require(std::isfinite(amplitude) && amplitude > 0.0, ErrorCategory::input, "kernel amplitude must be positive");
    require(dimension >= 1, ErrorCategory::input, "kernel dimension must be >= 1");
    require(std::isfinite(smoothness) && smoothness >= 0.0, ErrorCategory::input, "kernel smoothness must be >= 0");
    if (family == KernelFamily::matern)
        require(smoothness > 0.0, ErrorCategory::input, "matern smoothness nu must be positive");
    if (family == KernelFamily::sobolev_radial)
        require(smoothness > 0.5 * dimension, ErrorCategory::input,
                "sobolev-radial kernel needs smoothness s > d/2");
}

double ScalarKernelSpec::diagonal() const { return radial(0.0); }

double ScalarKernelSpec::radial(double r) const {
    switch (family) {
        case KernelFamily::gaussian:
            return amplitude * std::exp(-bandwidth * r * r);
        case KernelFamily::matern:
            return amplitude * matern_shape(smoothness, std::sqrt(2.0 * smoothness) * r / bandwidth);
        case KernelFamily::sobolev_radial: {
            const double nu = smoothness - 0.5 * dimension;
            // (4 pi)^{-d/2} Gamma(nu)/Gamma(s) is the value at zero distance.
            const double at_zero =
                std::exp(-0.5 * dimension * std::log(4.0 * std::numbers::pi) + std::lgamma(nu) - std::lgamma(smoothness));
            return amplitude * at_zero * matern_shape(nu, r / bandwidth);
        }
    }
    return 0.0;
}

OutputMatrix::OutputMatrix(Matrix m) : m_(std::move(m)) {
    require(m_.rows() == m_.cols() && m_.rows() >= 1, ErrorCategory::input, "output matrix must be square and nonempty");
    require(m_.allFinite(), ErrorCategory::input, "output matrix has non-finite entries");
    require(m_ == m_.transpose(), ErrorCategory::input, "output matrix must be exactly symmetric");
    const double scale = std::max(1.0, m_.cwiseAbs().maxCoeff());
    const double lo = min_eigenvalue(m_);
    if (lo < -1e-10 * scale) {
        std::ostringstream os;
        os << "output matrix is not PSD (min eigenvalue " << lo << ")";
        fail(ErrorCategory::not_psd, os.str());
    }
}

double OutputMatrix::opnorm() const { return spectral_norm(m_); }

PointSet::PointSet(Matrix rows) : x_(std::move(rows)) {
    require(x_.allFinite(), ErrorCategory::input, "point set has non-finite coordinates");
}

DecomposableKernel DecomposableKernel::with_default_kappa(ScalarKernelSpec scalar, OutputMatrix output) {
    scalar.validate();
    const double kappa = scalar.diagonal();
    return DecomposableKernel{std::move(scalar), std::move(output), kappa};
}

double eval_scalar(const ScalarKernelSpec& spec, const Eigen::Ref<const Vector>& x, const Eigen::Ref<const Vector>& y) {
    require(x.size() == spec.dimension && y.size() == spec.dimension, ErrorCategory::input,
            "kernel argument dimension does not match kernel dimension");
    require(all_finite(x) && all_finite(y), ErrorCategory::input, "kernel argument is not finite");
    return spec.radial((x - y).norm());
}

Matrix cross_gram(const ScalarKernelSpec& spec, const PointSet& a, const PointSet& b) {
    spec.validate();
    require(a.dim() == spec.dimension && b.dim() == spec.dimension, ErrorCategory::input,
            "point dimension does not match kernel dimension");
    Matrix g(a.size(), b.size());
    const auto cols = static_cast<std::size_t>(b.size());
    parallel_for(static_cast<std::size_t>(a.size()) * cols, [&](std::size_t idx) {
        const auto i = static_cast<Eigen::Index>(idx / cols);
        const auto j = static_cast<Eigen::Index>(idx % cols);
        g(i, j) = spec.radial((a.rows().row(i) - b.rows().row(j)).norm());
    });
    require(g.allFinite(), ErrorCategory::numeric, "kernel produced non-finite Gram entries");
    return g;
}

Matrix gram_scalar(const ScalarKernelSpec& spec, const PointSet& pts) {
    spec.validate();
    require(pts.size() >= 1, ErrorCategory::input, "Gram matrix needs at least one point");
    require(pts.dim() == spec.dimension, ErrorCategory::input, "point dimension does not match kernel dimension");
    const auto n = static_cast<std::size_t>(pts.size());
    Matrix g(n, n);
    // Upper triangle computed once per entry and mirrored.
    parallel_for(n, [&](std::size_t i) {
        const auto ii = static_cast<Eigen::Index>(i);
        for (Eigen::Index j = ii; j < static_cast<Eigen::Index>(n); ++j) {
            const double v = spec.radial((pts.rows().row(ii) - pts.rows().row(j)).norm());
            g(ii, j) = v;
            g(j, ii) = v;
        }
    });
    require(g.allFinite(), ErrorCategory::numeric, "kernel produced non-finite Gram entries");
    return g;
}

Matrix gram_scalar(const DecomposableKernel& kernel, const PointSet& pts) {
    Matrix g = gram_scalar(kernel.scalar, pts);
    const double top = g.diagonal().maxCoeff();
    if (top > kernel.kappa * (1.0 + 1e-12)) {
        std::ostringstream os;
        os << "kernel bound kappa=" << kernel.kappa << " violated by k(x,x)=" << top;
        fail(ErrorCategory::input, os.str());
    }
    return g;
}

Matrix gram_operator(const DecomposableKernel& kernel, const PointSet& pts) {
    return kronecker(gram_scalar(kernel, pts), kernel.output.matrix());
}

Vector predict_expansion(const DecomposableKernel& kernel, const PointSet& anchors, const Matrix& coeffs,
                         const Eigen::Ref<const Vector>& x) {
    require(coeffs.rows() == anchors.size(), ErrorCategory::input, "coefficient rows must equal anchor count");
    require(coeffs.cols() == kernel.output_dim(), ErrorCategory::input, "coefficient columns must equal output dimension");
    Vector weighted = Vector::Zero(kernel.output_dim());
    for (int j = 0; j < anchors.size(); ++j)
        weighted += eval_scalar(kernel.scalar, x, anchors.point(j)) * coeffs.row(j).transpose();
    return kernel.output.matrix() * weighted;
}

Matrix predict_expansion(const DecomposableKernel& kernel, const PointSet& anchors, const Matrix& coeffs,
                         const PointSet& queries) {
    require(coeffs.rows() == anchors.size(), ErrorCategory::input, "coefficient rows must equal anchor count");
    require(coeffs.cols() == kernel.output_dim(), ErrorCategory::input, "coefficient columns must equal output dimension");
    return cross_gram(kernel.scalar, queries, anchors) * coeffs * kernel.output.matrix();
}

double sobolev_norm_gaussian(int d, double s) {
    require(d >= 1, ErrorCategory::input, "dimension must be >= 1");
    require(std::isfinite(s) && s >= 0.0, ErrorCategory::input, "Sobolev order must be >= 0");
    // |g^(w)|^2 = 2^{-d} exp(-|w|^2/2); integrate (1+r^2)^s against it in polar form.
    auto integrand = [d, s](double r) {
        return std::exp(s * std::log1p(r * r) - 0.5 * r * r + (d - 1) * std::log(r));
    };
    auto integrand_d1 = [s](double r) { return std::exp(s * std::log1p(r * r) - 0.5 * r * r); };
    constexpr double tol = 1e-9;
    boost::math::quadrature::exp_sinh<double> quad;
    double error = 0.0;
    double l1 = 0.0;
    double value = 0.0;
    try {
        value = d == 1 ? quad.integrate(integrand_d1, 0.0, std::numeric_limits<double>::infinity(), tol, &error, &l1)
                       : quad.integrate(integrand, 0.0, std::numeric_limits<double>::infinity(), tol, &error, &l1);
    } catch (const std::exception& e) {
        fail(ErrorCategory::numeric, std::string("radial quadrature failed: ") + e.what());
    }
    if (!std::isfinite(value) || error > tol * std::abs(value)) {
        std::ostringstream os;
        os << "radial quadrature did not converge for d=" << d << ", s=" << s << ": value=" << value
           << ", error estimate=" << error << ", L1=" << l1;
        fail(ErrorCategory::numeric, os.str());
    }
    const double sphere = 2.0 * std::pow(std::numbers::pi, 0.5 * d) / std::tgamma(0.5 * d);
    return std::sqrt(std::ldexp(sphere * value, -d));
}

}  // namespace opbounds
