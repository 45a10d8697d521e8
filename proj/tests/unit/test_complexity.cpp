#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "opbounds/complexity.hpp"
#include "opbounds/error.hpp"

using namespace opbounds;
using testutil::random_matrix;
using testutil::random_points;
using testutil::random_psd;

namespace {

DecomposableKernel gauss_kernel(int d, const Matrix& m) {
    ScalarKernelSpec k;
    k.bandwidth = 0.7;
    k.dimension = d;
    return DecomposableKernel::with_default_kappa(k, OutputMatrix(m));
}

McConfig mc(int draws, std::uint64_t seed, bool exact = false) {
    McConfig c;
    c.draws = draws;
    c.seed = seed;
    c.exact_when_small = exact;
    return c;
}

}  // namespace

TEST_CASE("trivial ball cases") {
    const auto one = rademacher_ball_mc(Matrix::Ones(1, 1), 1, mc(100, 1));
    CHECK(one.estimate == 1.0);
    CHECK(one.standard_error == 0.0);
    CHECK(rademacher_ball_mc(Matrix::Zero(6, 6), 3, mc(100, 1)).estimate == 0.0);
    CHECK(rademacher_ball_mc(Matrix::Ones(1, 1), 1, mc(1, 1, true)).exact);
}

TEST_CASE("exact enumeration against a direct sum and MC") {
    const Matrix g = random_psd(5, 8);
    // Independent enumeration in Gray-code order.
    double sum = 0.0;
    for (unsigned p = 0; p < 256U; ++p) {
        const unsigned gray = p ^ (p >> 1);
        Vector s(8);
        for (int i = 0; i < 8; ++i) s(i) = (gray >> i) & 1U ? -1.0 : 1.0;
        sum += std::sqrt(std::max(0.0, s.dot(g * s)));
    }
    const double exact = sum / 256.0 / 4.0;
    CHECK(rademacher_ball_exact(g, 4) == doctest::Approx(exact).epsilon(1e-13));
    const auto est = rademacher_ball_mc(g, 4, mc(20000, 3));
    CHECK(std::abs(est.estimate - exact) <= 4.0 * est.standard_error);
}

TEST_CASE("trace bound") {
    CHECK(trace_bound(1.0, 3.0, 100) == doctest::Approx(0.173205).epsilon(1e-6));
    CHECK(trace_bound(1.0, 0.0, 7) == 0.0);
    CHECK(trace_bound(2.0, 1.5, 40) == doctest::Approx(2.0 * trace_bound(2.0, 1.5, 160)).epsilon(1e-14));
}

TEST_CASE("ball estimate respects the Jensen trace bound") {
    const int n = 16, m = 2;
    const auto kernel = gauss_kernel(2, Matrix::Identity(m, m));
    const PointSet x = random_points(11, n, 2);
    const auto est = rademacher_ball_mc(gram_operator(kernel, x), n, mc(10000, 4));
    CHECK(est.estimate <= trace_bound(kernel.kappa, 2.0, n) + 3.0 * est.standard_error);
}

TEST_CASE("finite class estimates") {
    const int n = 10, m = 2;
    const Matrix f = random_matrix(21, n, m);
    CHECK(rademacher_class_mc({Matrix::Zero(n, m)}, mc(500, 2)).estimate == 0.0);
    const auto single = rademacher_class_mc({f}, mc(3000, 2));
    const auto pair = rademacher_class_mc({f, -f}, mc(3000, 2));
    CHECK(single.estimate == pair.estimate);
    // Manual mean of |<sigma, f>| with the shared draw layout.
    double sum = 0.0;
    for (int d = 0; d < 3000; ++d) {
        const Vector s = rademacher_draw(2, static_cast<std::uint64_t>(d), n * m);
        double dot = 0.0;
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < m; ++j) dot += s(i * m + j) * f(i, j);
        sum += std::abs(dot);
    }
    CHECK(single.estimate == doctest::Approx(sum / 3000.0 / n).epsilon(1e-12));
}

TEST_CASE("class of unit-norm expansions stays below the ball") {
    const int n = 12, m = 2;
    const auto kernel = gauss_kernel(2, Matrix::Identity(m, m));
    const PointSet x = random_points(31, n, 2);
    const Matrix g = gram_scalar(kernel.scalar, x);
    std::vector<Matrix> values;
    for (int k = 0; k < 50; ++k) {
        const Matrix a = random_matrix(40 + k, n, m);
        const double norm = std::sqrt((g * a * a.transpose()).trace());
        values.push_back(g * a / norm);
    }
    const auto cls = rademacher_class_mc(values, mc(4000, 5));
    const auto ball = rademacher_ball_mc(gram_operator(kernel, x), n, mc(4000, 5));
    CHECK(cls.estimate <= ball.estimate + 3.0 * ball.standard_error);
}

TEST_CASE("permutation invariance and determinism") {
    const int n = 10;
    const auto kernel = gauss_kernel(2, Matrix::Identity(1, 1));
    const PointSet x = random_points(51, n, 2);
    Matrix rev = x.rows().colwise().reverse();
    const Matrix g1 = gram_operator(kernel, x);
    const Matrix g2 = gram_operator(kernel, PointSet(rev));
    CHECK(rademacher_ball_exact(g1, n) == doctest::Approx(rademacher_ball_exact(g2, n)).epsilon(1e-12));
    const auto a = rademacher_ball_mc(g1, n, mc(5000, 6));
    const auto b = rademacher_ball_mc(g2, n, mc(5000, 6));
    CHECK(std::abs(a.estimate - b.estimate) <= 3.0 * (a.standard_error + b.standard_error));
    CHECK(rademacher_ball_mc(g1, n, mc(5000, 6)).estimate == a.estimate);
}

TEST_CASE("errors") {
    Matrix bad(2, 2);
    bad << 1.0, 2.0, 2.0, 1.0;
    CHECK_THROWS_AS((void)rademacher_ball_mc(bad, 2, mc(10, 1)), Error);
    CHECK_THROWS_AS((void)rademacher_class_mc(std::vector<Matrix>{}, mc(10, 1)), Error);
    CHECK_THROWS_AS((void)rademacher_ball_mc(Matrix::Identity(2, 2), 2, mc(0, 1)), Error);
}
