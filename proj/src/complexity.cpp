#include "opbounds/complexity.hpp"

#include <cmath>
#include <sstream>

#include "opbounds/error.hpp"
#include "opbounds/parallel.hpp"
#include "opbounds/rng.hpp"

namespace opbounds {

namespace {

constexpr std::uint64_t kSignStream = 7;

McEstimate summarize(const std::vector<double>& per_draw, double scale) {
    // Fixed-order reduction.
    double sum = 0.0;
    for (double v : per_draw) sum += v;
    const double k = static_cast<double>(per_draw.size());
    const double mean = sum / k;
    double ss = 0.0;
    for (double v : per_draw) ss += (v - mean) * (v - mean);
    McEstimate out;
    out.draws = static_cast<int>(per_draw.size());
    out.estimate = scale * mean;
    out.standard_error = per_draw.size() > 1 ? scale * std::sqrt(ss / (k - 1.0)) / std::sqrt(k) : 0.0;
    return out;
}

void check_psd_gram(const Matrix& g) {
    require(g.rows() == g.cols(), ErrorCategory::input, "Gram matrix must be square");
    const double scale = std::max(1.0, g.cwiseAbs().maxCoeff());
    const double lo = min_eigenvalue(g);
    if (lo < -1e-10 * scale * static_cast<double>(g.rows())) {
        std::ostringstream os;
        os << "Gram matrix is not PSD (min eigenvalue " << lo << ")";
        fail(ErrorCategory::not_psd, os.str());
    }
}

}  // namespace

void McConfig::validate() const { require(draws >= 1, ErrorCategory::input, "Monte-Carlo draws must be >= 1"); }

Vector rademacher_draw(std::uint64_t seed, std::uint64_t draw, Eigen::Index length) {
    const CounterRng rng(seed, kSignStream);
    Vector s(length);
    for (Eigen::Index i = 0; i < length; ++i) s(i) = rng.rademacher(draw, static_cast<std::uint64_t>(i));
    return s;
}

double rademacher_ball_exact(const Matrix& gram_op, int n) {
    check_psd_gram(gram_op);
    const auto len = gram_op.rows();
    require(len <= 24, ErrorCategory::input, "exact enumeration limited to nm <= 24");
    require(n >= 1, ErrorCategory::input, "n must be >= 1");
    const std::uint64_t patterns = std::uint64_t{1} << len;
    std::vector<double> per(patterns);
    parallel_for(patterns, [&](std::size_t p) {
        Vector s(len);
        for (Eigen::Index i = 0; i < len; ++i) s(i) = ((p >> i) & 1U) != 0 ? 1.0 : -1.0;
        per[p] = std::sqrt(std::max(0.0, s.dot(gram_op * s)));
    });
    double sum = 0.0;
    for (double v : per) sum += v;
    return sum / static_cast<double>(patterns) / static_cast<double>(n);
}

McEstimate rademacher_ball_mc(const Matrix& gram_op, int n, const McConfig& cfg) {
    cfg.validate();
    require(n >= 1, ErrorCategory::input, "n must be >= 1");
    check_psd_gram(gram_op);
    const auto len = gram_op.rows();
    if (cfg.exact_when_small && len <= 16) {
        McEstimate out;
        out.estimate = rademacher_ball_exact(gram_op, n);
        out.exact = true;
        out.draws = static_cast<int>(std::uint64_t{1} << len);
        return out;
    }
    std::vector<double> per(static_cast<std::size_t>(cfg.draws));
    parallel_for(per.size(), [&](std::size_t d) {
        const Vector s = rademacher_draw(cfg.seed, d, len);
        per[d] = std::sqrt(std::max(0.0, s.dot(gram_op * s)));
    });
    return summarize(per, 1.0 / static_cast<double>(n));
}

double trace_bound(double kappa, double trM, int n) {
    require(n >= 1 && kappa >= 0.0 && trM >= 0.0, ErrorCategory::input, "trace bound needs kappa, Tr(M) >= 0 and n >= 1");
    return std::sqrt(kappa * trM / static_cast<double>(n));
}

McEstimate rademacher_class_mc(const std::vector<Matrix>& values, const McConfig& cfg) {
    cfg.validate();
    require(!values.empty(), ErrorCategory::input, "function class is empty");
    const auto n = values.front().rows();
    const auto m = values.front().cols();
    require(n >= 1, ErrorCategory::input, "class evaluation needs at least one point");
    for (const auto& v : values)
        require(v.rows() == n && v.cols() == m, ErrorCategory::input, "class members evaluated on different shapes");
    // Row-major flattening matches the sigma[i m + j] layout.
    std::vector<Vector> flat;
    flat.reserve(values.size());
    for (const auto& v : values) {
        Vector f(n * m);
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = 0; j < m; ++j) f(i * m + j) = v(i, j);
        flat.push_back(std::move(f));
    }
    std::vector<double> per(static_cast<std::size_t>(cfg.draws));
    parallel_for(per.size(), [&](std::size_t d) {
        const Vector s = rademacher_draw(cfg.seed, d, n * m);
        double best = 0.0;
        for (const auto& f : flat) best = std::max(best, std::abs(s.dot(f)));
        per[d] = best;
    });
    return summarize(per, 1.0 / static_cast<double>(n));
}

McEstimate rademacher_class_mc(const std::vector<Predictor>& predictors, const PointSet& data, int m,
                               const McConfig& cfg) {
    require(!predictors.empty(), ErrorCategory::input, "function class is empty");
    std::vector<Matrix> values;
    values.reserve(predictors.size());
    for (const auto& f : predictors) {
        Matrix v(data.size(), m);
        for (int i = 0; i < data.size(); ++i) {
            const Vector y = f(data.point(i));
            require(y.size() == m, ErrorCategory::input, "predictor output dimension differs from m");
            v.row(i) = y.transpose();
        }
        values.push_back(std::move(v));
    }
    return rademacher_class_mc(values, cfg);
}

}  // namespace opbounds
