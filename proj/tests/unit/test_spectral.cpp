#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "opbounds/error.hpp"
#include "opbounds/rng.hpp"
#include "opbounds/spectral.hpp"

using namespace opbounds;
using testutil::random_matrix;
using testutil::random_psd;

namespace {

double psi(const Vector& mu, double delta) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < mu.size(); ++i) s += std::min(delta * delta, mu(i));
    return std::sqrt(s / mu.size());
}

// Smallest grid value of delta with psi(delta) <= delta^2.
double grid_scan_radius(const Vector& mu, double step) {
    for (double d = 0.0;; d += step)
        if (d > 0.0 && psi(mu, d) <= d * d) return d * d;
}

// Best Rayleigh quotient a^T T a / a^T B a over random draws, polished by gradient ascent.
double rayleigh_oracle(const Matrix& top, const Matrix& bottom, std::uint64_t seed, int draws, double* best_raw) {
    const CounterRng rng(seed, 3);
    const auto q = top.rows();
    double best = -1.0;
    Vector arg(q);
    for (int k = 0; k < draws; ++k) {
        Vector a(q);
        for (Eigen::Index i = 0; i < q; ++i) a(i) = rng.gaussian(k, i);
        const double den = a.dot(bottom * a);
        if (den <= 0.0) continue;
        const double v = a.dot(top * a) / den;
        if (v > best) {
            best = v;
            arg = a;
        }
    }
    *best_raw = best;
    // Power iteration on bottom^{-1} top from the best sample.
    const Eigen::LDLT<Matrix> ldlt(bottom);
    for (int it = 0; it < 20000; ++it) {
        arg = ldlt.solve(top * arg);
        arg /= arg.norm();
    }
    return arg.dot(top * arg) / arg.dot(bottom * arg);
}

}  // namespace

TEST_CASE("scaled gram eigendecomposition") {
    SUBCASE("identity") {
        const auto dec = eigendecompose_scaled_gram(Matrix::Identity(5, 5), 5);
        for (int i = 0; i < 5; ++i) CHECK(dec.mu(i) == doctest::Approx(0.2));
    }
    SUBCASE("rank one") {
        Vector v(4);
        v << 1.0, 2.0, -1.0, 0.5;
        const auto dec = eigendecompose_scaled_gram(v * v.transpose(), 4);
        CHECK(dec.mu(0) == doctest::Approx(v.squaredNorm() / 4.0));
        for (int i = 1; i < 4; ++i) CHECK(std::abs(dec.mu(i)) <= 1e-14);
    }
    SUBCASE("random reconstruction") {
        const Matrix g = random_psd(11, 6);
        const auto dec = eigendecompose_scaled_gram(g, 6);
        const Matrix back = dec.U * dec.mu.asDiagonal() * dec.U.transpose();
        CHECK((back - g / 6.0).cwiseAbs().maxCoeff() <= 1e-10);
        for (int i = 1; i < 6; ++i) CHECK(dec.mu(i - 1) >= dec.mu(i));
    }
    SUBCASE("indefinite input is rejected") {
        Matrix g(2, 2);
        g << 1.0, 2.0, 2.0, 1.0;
        try {
            (void)eigendecompose_scaled_gram(g, 2);
            FAIL("expected not-PSD");
        } catch (const Error& e) {
            CHECK(e.category() == ErrorCategory::not_psd);
        }
    }
}

TEST_CASE("critical radius") {
    CHECK(critical_radius(Vector::Zero(7)) == 0.0);
    for (int n : {1, 5, 64})
        CHECK(critical_radius(Vector::Constant(n, 0.01)) == doctest::Approx(0.1).epsilon(1e-8));
    Vector geo(32);
    for (int i = 0; i < 32; ++i) geo(i) = 0.5 * std::pow(2.0, -i);
    const double got = critical_radius(geo);
    const double grid = grid_scan_radius(geo, 1e-6);
    CHECK(std::abs(std::sqrt(got) - std::sqrt(grid)) <= 2e-6);
    // Boundary and minimality on random spectra.
    const CounterRng rng(5, 0);
    for (int k = 0; k < 100; ++k) {
        const int n = 2 + k % 40;
        Vector mu(n);
        for (int i = 0; i < n; ++i) mu(i) = std::pow(rng.uniform(k, i), 3.0) * (k % 3 == 0 ? 5.0 : 1.0);
        std::sort(mu.data(), mu.data() + n, std::greater<>());
        const double d2 = critical_radius(mu);
        const double d = std::sqrt(d2);
        CHECK(psi(mu, d) <= d2 + 1e-12);
        if (d > 1e-8) CHECK(psi(mu, d - 1e-8) > (d - 1e-8) * (d - 1e-8));
    }
}

TEST_CASE("statistical dimension") {
    Vector mu(3);
    mu << 0.5, 0.3, 0.05;
    CHECK(statistical_dimension(mu, 0.1) == 3);
    CHECK(statistical_dimension(mu, 0.6) == 1);
    CHECK(statistical_dimension(mu, 0.01) == 3);
    int prev = 4;
    for (double d2 = 0.0; d2 < 1.0; d2 += 0.01) {
        const int v = statistical_dimension(mu, d2);
        CHECK(v <= prev);
        prev = v;
    }
}

TEST_CASE("satisfiability checks") {
    const int n = 10;
    const Matrix g = random_psd(21, n);
    const auto dec = eigendecompose_scaled_gram(g, n);
    const double d2 = critical_radius(dec.mu);
    const int dn = statistical_dimension(dec.mu, d2);
    SUBCASE("identity sketch") {
        const auto r = check_satisfiability(SketchMatrix::from_dense(Matrix::Identity(n, n)), dec, dn, d2, 1.0);
        CHECK(r.norm1 <= 1e-12);
        if (dn < n) CHECK(r.norm2 == doctest::Approx(std::sqrt(dec.mu(dn))).epsilon(1e-10));
        CHECK(r.satisfiable);
    }
    SUBCASE("zero sketch") {
        const auto r = check_satisfiability(SketchMatrix::from_dense(Matrix::Zero(3, n)), dec, dn, d2, 5.0);
        CHECK(r.norm1 == doctest::Approx(1.0));
        CHECK_FALSE(r.satisfiable);
    }
    SUBCASE("verdict is a pure function") {
        CHECK(satisfiability_verdict(0.5, 0.3, 1.0, 0.09));
        CHECK_FALSE(satisfiability_verdict(0.51, 0.0, 1.0, 0.09));
        CHECK_FALSE(satisfiability_verdict(0.1, 0.31, 1.0, 0.09));
    }
    SUBCASE("d_n out of range") {
        CHECK_THROWS_AS((void)check_satisfiability(SketchMatrix::from_dense(Matrix::Identity(n, n)), dec, 0, d2, 1.0),
                        Error);
    }
}

TEST_CASE("pencil maximum") {
    const Matrix b = random_psd(31, 5, 0.1);
    CHECK(pencil_max(b, b) == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(pencil_max(4.0 * b, b) == doctest::Approx(4.0).epsilon(1e-12));
    for (int k = 0; k < 5; ++k) {
        const Matrix t = random_psd(40 + k, 5);
        const Matrix bb = random_psd(60 + k, 5, 0.05);
        double raw = 0.0;
        const double polished = rayleigh_oracle(t, bb, 70 + k, 10000, &raw);
        const double v = pencil_max(t, bb);
        CHECK(v >= raw - 1e-12);
        CHECK(std::abs(v - polished) <= 1e-6 * std::max(1.0, v));
        const Eigen::GeneralizedSelfAdjointEigenSolver<Matrix> ges(t, bb);
        CHECK(std::abs(v - ges.eigenvalues().maxCoeff()) <= 1e-9 * std::max(1.0, v));
        // Congruence invariance.
        const Matrix A = random_matrix(80 + k, 5, 5) + 3.0 * Matrix::Identity(5, 5);
        CHECK(testutil::rel_err(pencil_max(A.transpose() * t * A, A.transpose() * bb * A), v) <= 1e-8);
    }
    SUBCASE("null directions of the bottom matrix are ignored") {
        Matrix bottom = Matrix::Zero(3, 3);
        bottom(0, 0) = 1.0;
        bottom(1, 1) = 2.0;
        Matrix top = Matrix::Identity(3, 3) * 5.0;
        top(2, 2) = 100.0;
        CHECK(pencil_max(top, bottom) == doctest::Approx(5.0));
    }
    SUBCASE("zero bottom matrix") {
        try {
            (void)pencil_max(Matrix::Identity(2, 2), Matrix::Zero(2, 2));
            FAIL("expected degenerate");
        } catch (const Error& e) {
            CHECK(e.category() == ErrorCategory::degenerate);
        }
    }
}
