#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "helpers.hpp"
#include "opbounds/complexity.hpp"
#include "opbounds/deep_vvrkhs.hpp"
#include "opbounds/error.hpp"
#include "opbounds/rng.hpp"
#include "opbounds/spectral.hpp"
#include "opbounds/warnings.hpp"

using namespace opbounds;
using testutil::random_matrix;
using testutil::random_points;
using testutil::random_psd;
using testutil::rel_err;

namespace {

ScalarKernelSpec gauss(int d, double gamma = 0.5, double amp = 1.0) {
    ScalarKernelSpec k;
    k.bandwidth = gamma;
    k.dimension = d;
    k.amplitude = amp;
    return k;
}

// Layer whose expansion reproduces `targets` at the anchors.
VVLayer interpolating_layer(const ScalarKernelSpec& k, const PointSet& anchors, const Matrix& targets, const Matrix& M) {
    const Matrix g = gram_scalar(k, anchors);
    VVLayer l;
    l.kernel = k;
    l.M = OutputMatrix(M);
    l.anchors = anchors;
    l.coeffs = g.ldlt().solve(targets) * M.inverse();
    return l;
}

LayeredModel random_model(std::uint64_t seed, const PointSet& x, const std::vector<int>& widths, double coef_scale) {
    std::vector<LayerInit> init;
    for (std::size_t j = 0; j < widths.size(); ++j) {
        const int w = widths[j];
        const Matrix a = random_matrix(seed + 10 * j, w, w);
        init.push_back({gauss(1, 0.3 + 0.2 * j), OutputMatrix(a * a.transpose() / w + 0.5 * Matrix::Identity(w, w)), {}});
    }
    drain_warnings();
    LayeredModel m = init_model(init, x, seed);
    drain_warnings();
    for (std::size_t j = 0; j < m.layers.size(); ++j)
        m.layers[j].coeffs = coef_scale * random_matrix(seed + 100 + j, m.layers[j].anchors.size(), widths[j]);
    return m;
}

// Pencil Grams assembled directly from kernel evaluations.
std::pair<Matrix, Matrix> pencil_grams(const LayeredModel& model, const PointSet& x, const Matrix& probes) {
    const auto n = x.size();
    const Matrix hl = hidden(model, x)[model.layers.size() - 1];
    const Matrix& M = model.layers.back().M.matrix();
    Matrix top(n, n), bottom(n, n);
    for (int p = 0; p < n; ++p)
        for (int q = 0; q < n; ++q) {
            const double yy = probes.row(p).dot(M * probes.row(q).transpose());
            bottom(p, q) = eval_scalar(model.layers.front().kernel, x.point(p), x.point(q)) * yy;
            top(p, q) = eval_scalar(model.layers.back().kernel, hl.row(p).transpose(), hl.row(q).transpose()) * yy;
        }
    return {top, bottom};
}

}  // namespace

TEST_CASE("forward pass") {
    const int n = 6;
    const PointSet x = random_points(1, n, 2, 2.0);
    LayeredModel model;
    model.input_dim = 2;
    model.output_dim = 2;
    const Matrix M2 = random_psd(2, 2, 0.5);
    model.layers.push_back(interpolating_layer(gauss(2, 1.0), x, x.rows(), Matrix::Identity(2, 2)));
    model.layers.push_back(interpolating_layer(gauss(2, 1.0), x, x.rows(), M2));
    VVLayer top;
    top.kernel = gauss(2, 0.7);
    top.M = OutputMatrix(random_psd(3, 2, 0.2));
    top.anchors = x;
    top.coeffs = random_matrix(4, n, 2);
    model.layers.push_back(top);
    model.validate();
    const Matrix out = forward(model, x);
    const Matrix alone = cross_gram(top.kernel, x, x) * top.coeffs * top.M.matrix();
    CHECK((out - alone).cwiseAbs().maxCoeff() <= 1e-8);
    const Vector single = forward(model, x.point(2));
    CHECK((single - out.row(2).transpose()).norm() <= 1e-12);

    LayeredModel doubled = model;
    doubled.layers.back().coeffs *= 2.0;
    CHECK((forward(doubled, x) - 2.0 * out).cwiseAbs().maxCoeff() <= 1e-12);
    for (auto& l : doubled.layers) l.coeffs.setZero();
    CHECK(forward(doubled, x).cwiseAbs().maxCoeff() == 0.0);
    CHECK_THROWS_AS((void)forward(model, random_points(5, 3, 3)), Error);
}

TEST_CASE("PF product norm") {
    const int n = 5;
    const PointSet x = random_points(11, n, 2, 2.0);
    const Matrix probes = random_matrix(12, n, 2);
    SUBCASE("identity lower map, equal kernels") {
        LayeredModel model;
        model.input_dim = 2;
        model.output_dim = 2;
        model.layers.push_back(interpolating_layer(gauss(2, 1.0), x, x.rows(), Matrix::Identity(2, 2)));
        VVLayer top = interpolating_layer(gauss(2, 1.0), x, random_matrix(13, n, 2), Matrix::Identity(2, 2));
        model.layers.push_back(top);
        CHECK(std::abs(pf_product_norm(model, x, probes) - 1.0) <= 1e-8);
        model.layers.back().kernel.amplitude = 4.0;
        CHECK(std::abs(pf_product_norm(model, x, probes) - 2.0) <= 1e-8);
    }
    SUBCASE("Rayleigh sampling oracle and permutation invariance") {
        const LayeredModel model = random_model(14, PointSet(x.rows().leftCols(1)), {2, 3, 2}, 0.5);
        const PointSet x1(x.rows().leftCols(1));
        const double pf = pf_product_norm(model, x1, probes);
        const auto [top, bottom] = pencil_grams(model, x1, probes);
        const CounterRng rng(15, 0);
        double best = 0.0;
        for (int k = 0; k < 10000; ++k) {
            Vector v(n);
            for (int i = 0; i < n; ++i) v(i) = rng.gaussian(k, i);
            best = std::max(best, std::sqrt(v.dot(top * v) / v.dot(bottom * v)));
        }
        CHECK(pf >= best - 1e-12);
        CHECK(pf <= best * 1.2);
        Eigen::PermutationMatrix<Eigen::Dynamic> perm(n);
        perm.indices() << 3, 0, 4, 1, 2;
        const Matrix xp = perm * x1.rows();
        const Matrix pp = perm * probes;
        CHECK(rel_err(pf_product_norm(model, PointSet(xp), pp), pf) <= 1e-10);
        // The chained layer norms bound the product from above.
        const auto per_layer = pf_layer_norms(model, x1, probes);
        CHECK(per_layer.size() == 2);
        double prod = 1.0;
        for (double v : per_layer) prod *= v;
        CHECK(prod >= pf * (1.0 - 1e-10));
    }
    SUBCASE("zero probe rejected and default probes") {
        Matrix bad = probes;
        bad.row(1).setZero();
        const LayeredModel model = random_model(16, PointSet(x.rows().leftCols(1)), {2, 2}, 0.5);
        CHECK_THROWS_AS((void)pf_product_norm(model, PointSet(x.rows().leftCols(1)), bad), Error);
        const Matrix fixed = default_probes(bad);
        CHECK(fixed(1, 1) == 1.0);
        CHECK(fixed(1, 0) == 0.0);
        CHECK((fixed.row(0) - probes.row(0)).norm() == 0.0);
    }
}

TEST_CASE("top layer norm") {
    VVLayer l;
    l.kernel = gauss(1);
    l.M = OutputMatrix::identity(2);
    l.anchors = PointSet(Matrix::Zero(1, 1));
    l.coeffs = Matrix(1, 2);
    l.coeffs << 3.0, 4.0;
    CHECK(top_layer_norm(l) == doctest::Approx(5.0));
    l.coeffs *= -2.5;
    CHECK(top_layer_norm(l) == doctest::Approx(12.5));
    l.coeffs.setZero();
    CHECK(top_layer_norm(l) == 0.0);
}

TEST_CASE("proposition and remark bounds") {
    CHECK(remark2_bound(1.0, 1.0, 1.0, 2.0, 100, Remark2Mode::printed) == doctest::Approx(std::sqrt(2.0) / 100.0));
    CHECK(remark2_bound(1.0, 1.0, 1.0, 2.0, 100, Remark2Mode::consistent) == doctest::Approx(std::sqrt(0.02)));
    CHECK(remark2_bound(0.0, 3.0, 1.0, 2.0, 100, Remark2Mode::consistent) == 0.0);
    const int n = 7;
    const PointSet x = random_points(21, n, 1);
    const LayeredModel model = random_model(22, x, {2, 2, 2}, 0.4);
    const Matrix probes = random_matrix(23, n, 2);
    const auto r = prop1_bound(model, x, probes);
    CHECK(rel_err(r.recompute(), r.total) <= 1e-12);
    CHECK(r.inv_n == doctest::Approx(1.0 / n));
    const double trM1 = model.layers.front().M.trace();
    CHECK(r.trace_root == doctest::Approx(std::sqrt(n * trM1)).epsilon(1e-12));
    // k_1(x, x) = 1 everywhere, so the consistent remark bound coincides.
    CHECK(rel_err(remark2_bound(model, x, probes, 1.0, trM1, Remark2Mode::consistent), r.total) <= 1e-12);
    LayeredModel zero_top = model;
    zero_top.layers.back().coeffs.setZero();
    CHECK(prop1_bound(zero_top, x, probes).total == 0.0);
}

TEST_CASE("proposition bound dominates a sampled top-layer family") {
    // m = 1 with M = 1: the probe span equals span{phi_1(x_i)}.
    const int n = 12;
    const PointSet x = random_points(31, n, 1, 1.5);
    std::vector<LayerInit> init = {{gauss(1, 0.8), OutputMatrix::identity(2), {}},
                                   {gauss(1, 0.6), OutputMatrix::identity(2), {}},
                                   {gauss(1, 0.5), OutputMatrix::identity(1), {}}};
    LayeredModel model = init_model(init, x, 7);
    model.layers[0].coeffs = 2.0 * random_matrix(32, n, 2);
    model.layers[1].coeffs = 2.0 * random_matrix(33, n, 2);
    const double B = 1.5;
    model.layers[2].coeffs = random_matrix(34, n, 1);
    model.layers[2].coeffs *= B / top_layer_norm(model.layers[2]);
    const Matrix probes = Matrix::Ones(n, 1);
    const double bound = prop1_bound(model, x, probes).total;
    std::vector<Matrix> values;
    for (int k = 0; k < 60; ++k) {
        LayeredModel member = model;
        member.layers[2].coeffs = random_matrix(40 + k, n, 1);
        member.layers[2].coeffs *= B / top_layer_norm(member.layers[2]);
        values.push_back(forward(member, x));
    }
    McConfig cfg;
    cfg.draws = 5000;
    cfg.seed = 3;
    const auto est = rademacher_class_mc(values, cfg);
    CHECK(est.estimate <= bound + 3.0 * est.standard_error);
}

TEST_CASE("objective terms") {
    const int n = 6;
    const PointSet x = random_points(51, n, 1);
    LayeredModel model = random_model(52, x, {2, 2}, 0.3);
    const Matrix ones = Matrix::Ones(n, 2);
    LayeredModel zero = model;
    for (auto& l : zero.layers) l.coeffs.setZero();
    const Dataset unit{x, ones};
    CHECK(objective(zero, unit, 0.0, 0.0).total == doctest::Approx(2.0));
    const Dataset data{x, random_matrix(53, n, 2)};
    const auto t0 = objective(model, data, 0.3, 0.2);
    CHECK(t0.total == doctest::Approx(t0.data + 0.3 * t0.pf_norm + 0.2 * t0.top_norm).epsilon(1e-14));
    CHECK(t0.data == doctest::Approx((forward(model, x) - data.y).squaredNorm() / n).epsilon(1e-14));
    CHECK(objective(model, data, 0.3, 0.5).total > t0.total);
    // Interpolant with zero weights.
    LayeredModel one;
    one.input_dim = 1;
    one.output_dim = 2;
    one.layers.push_back(interpolating_layer(gauss(1, 1.0), x, data.y, random_psd(54, 2, 0.5)));
    CHECK(objective(one, data, 0.0, 0.0).total <= 1e-16 * 1e6);
}

TEST_CASE("gradients") {
    const int n = 6;
    const PointSet x = random_points(61, n, 1);
    SUBCASE("zero single-layer model") {
        LayeredModel model = random_model(62, x, {2}, 0.0);
        const Dataset data{x, random_matrix(63, n, 2)};
        const auto g = gradient(model, data, 0.0, 0.0, GradMode::analytic);
        const Matrix K = cross_gram(model.layers[0].kernel, x, model.layers[0].anchors);
        const Matrix want = -(2.0 / n) * K.transpose() * data.y * model.layers[0].M.matrix();
        CHECK((g[0] - want).cwiseAbs().maxCoeff() <= 1e-14);
    }
    SUBCASE("analytic matches finite differences") {
        for (int rep = 0; rep < 6; ++rep) {
            const std::vector<int> widths = rep % 2 ? std::vector<int>{2, 3, 2} : std::vector<int>{3, 2};
            const LayeredModel model = random_model(70 + rep, x, widths, 0.8);
            const Dataset data{x, random_matrix(80 + rep, n, 2)};
            drain_warnings();
            const auto ga = gradient(model, data, 0.2, 0.3, GradMode::analytic);
            const auto gf = gradient(model, data, 0.2, 0.3, GradMode::finite_diff);
            CHECK(drain_warnings().empty());
            double diff = 0.0, scale = 0.0;
            for (std::size_t j = 0; j < ga.size(); ++j) {
                diff = std::max(diff, (ga[j] - gf[j]).cwiseAbs().maxCoeff());
                scale = std::max(scale, gf[j].cwiseAbs().maxCoeff());
            }
            CHECK(diff <= 1e-5 * scale);
        }
    }
    SUBCASE("zero at the interpolant") {
        const Dataset data{x, random_matrix(90, n, 2)};
        LayeredModel one;
        one.input_dim = 1;
        one.output_dim = 2;
        one.layers.push_back(interpolating_layer(gauss(1, 1.0), x, data.y, random_psd(91, 2, 0.5)));
        CHECK(gradient_norm(gradient(one, data, 0.0, 0.0, GradMode::analytic)) <= 1e-8);
    }
    SUBCASE("analytic mode needs gaussian kernels") {
        LayeredModel model = random_model(92, x, {2, 2}, 0.5);
        model.layers[1].kernel.family = KernelFamily::matern;
        model.layers[1].kernel.smoothness = 1.5;
        const Dataset data{x, random_matrix(93, n, 2)};
        CHECK_THROWS_AS((void)gradient(model, data, 0.1, 0.1, GradMode::analytic), Error);
        CHECK(gradient(model, data, 0.1, 0.1, GradMode::finite_diff).size() == 2);
    }
}

TEST_CASE("training contracts") {
    const int n = 8;
    const PointSet x = random_points(101, n, 1);
    const Dataset data{x, random_matrix(102, n, 2)};
    SUBCASE("descent over accepted steps") {
        const LayeredModel model = random_model(103, x, {2, 2, 2}, 0.5);
        TrainConfig cfg;
        cfg.lambda1 = 0.05;
        cfg.lambda2 = 0.05;
        cfg.iters = 30;
        drain_warnings();
        const auto res = train(model, data, cfg);
        drain_warnings();
        for (std::size_t i = 1; i < res.trajectory.size(); ++i)
            CHECK(res.trajectory[i].objective < res.trajectory[i - 1].objective);
        CHECK(res.trajectory.back().objective < objective(model, data, 0.05, 0.05).total);
        const auto again = train(model, data, cfg);
        CHECK(again.trajectory.back().objective == res.trajectory.back().objective);
    }
    SUBCASE("large weights shrink both norms") {
        const LayeredModel model = random_model(104, x, {2, 2, 2}, 0.5);
        TrainConfig cfg;
        cfg.lambda1 = 1e3;
        cfg.lambda2 = 1e3;
        cfg.iters = 20;
        cfg.step = 1e-3;
        drain_warnings();
        const auto res = train(model, data, cfg);
        drain_warnings();
        const auto& first = res.trajectory.front();
        const auto& last = res.trajectory.back();
        CHECK(last.pf_norm < first.pf_norm);
        CHECK(last.top_norm < first.top_norm);
    }
    SUBCASE("zero targets with a zero model stop at iteration 1") {
        LayeredModel model = random_model(105, x, {2, 2}, 0.0);
        const Dataset zeros{x, Matrix::Zero(n, 2)};
        TrainConfig cfg;
        const auto res = train(model, zeros, cfg);
        CHECK(res.converged);
        CHECK(res.iterations == 1);
    }
    SUBCASE("capacity projection") {
        LayeredModel model = random_model(106, x, {2, 2}, 2.0);
        model.layers.back().capacity = 0.1;
        TrainConfig cfg;
        cfg.iters = 5;
        cfg.project_capacity = true;
        drain_warnings();
        const auto res = train(model, data, cfg);
        drain_warnings();
        CHECK(top_layer_norm(res.model.layers.back()) <= 0.1 * (1.0 + 1e-12));
    }
}

TEST_CASE("kernel refinement") {
    const PointSet x = random_points(111, 5, 1);
    LayeredModel model = random_model(112, x, {2, 2, 2}, 0.5);
    const Matrix M = random_psd(113, 2, 0.3);
    for (auto& l : model.layers) l.M = OutputMatrix(M);
    const Matrix probes = random_matrix(114, 5, 2);
    SUBCASE("A = M leaves the model unchanged") {
        const auto same = refine_kernel(model, M, RefineDirection::shrink);
        CHECK((forward(same, x) - forward(model, x)).cwiseAbs().maxCoeff() == 0.0);
    }
    SUBCASE("halving shrinks the consistent bound by 1/sqrt(2) at frozen factors") {
        const auto half = refine_kernel(model, 0.5 * M, RefineDirection::shrink);
        CHECK(half.layers[1].M.trace() == doctest::Approx(0.5 * M.trace()));
        const double pf = pf_product_norm(model, x, probes);
        const double top = top_layer_norm(model.layers.back());
        const double before = remark2_bound(pf, top, 1.0, M.trace(), 5, Remark2Mode::consistent);
        const double after = remark2_bound(pf, top, 1.0, half.layers[0].M.trace(), 5, Remark2Mode::consistent);
        CHECK(rel_err(after, before / std::sqrt(2.0)) <= 1e-10);
    }
    SUBCASE("ordering violations") {
        const Vector e = Vector::Ones(2);
        try {
            (void)refine_kernel(model, M + e * e.transpose(), RefineDirection::shrink);
            FAIL("expected refinement-order error");
        } catch (const Error& err) {
            CHECK(err.category() == ErrorCategory::refinement_order);
        }
        CHECK_NOTHROW((void)refine_kernel(model, M + e * e.transpose(), RefineDirection::enlarge));
        CHECK_THROWS_AS((void)refine_kernel(model, Matrix::Identity(3, 3), RefineDirection::shrink), Error);
    }
    SUBCASE("randomized acceptance matches an eigenvalue oracle") {
        int accepted = 0;
        for (int k = 0; k < 100; ++k) {
            const Matrix A = random_psd(200 + k, 2, 0.05) * (k % 3 == 0 ? 0.3 : 1.0);
            const auto dir = k % 2 ? RefineDirection::enlarge : RefineDirection::shrink;
            const Matrix diff = dir == RefineDirection::shrink ? Matrix(M - A) : Matrix(A - M);
            const bool oracle = Eigen::SelfAdjointEigenSolver<Matrix>(diff).eigenvalues().minCoeff() >= -1e-10;
            bool ok = true;
            try {
                (void)refine_kernel(model, A, dir);
            } catch (const Error&) {
                ok = false;
            }
            CHECK(ok == oracle);
            accepted += ok;
        }
        CHECK(accepted > 0);
        CHECK(accepted < 100);
    }
}

TEST_CASE("initialization") {
    const PointSet x = random_points(121, 4, 2);
    drain_warnings();
    const LayeredModel m = init_model({{gauss(7), OutputMatrix::identity(3), {}}, {gauss(7), OutputMatrix::identity(2), 2.0}}, x, 5);
    CHECK(drain_warnings().size() == 1);
    CHECK(m.layers[0].kernel.dimension == 2);
    CHECK(m.layers[1].kernel.dimension == 3);
    CHECK(m.layers[0].coeffs.cwiseAbs().maxCoeff() <= 0.1);
    CHECK((m.layers[1].anchors.rows() - hidden(m, x)[1]).cwiseAbs().maxCoeff() <= 1e-15);
    CHECK(m.layers[1].capacity.value() == 2.0);
    const LayeredModel again = init_model({{gauss(7), OutputMatrix::identity(3), {}}, {gauss(7), OutputMatrix::identity(2), 2.0}}, x, 5);
    CHECK((again.layers[1].coeffs - m.layers[1].coeffs).cwiseAbs().maxCoeff() == 0.0);
    drain_warnings();
}
