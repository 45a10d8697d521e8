#include "opbounds/sketching.hpp"

#include <cmath>
#include <iomanip>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "opbounds/error.hpp"
#include "opbounds/parallel.hpp"
#include "opbounds/rng.hpp"
#include "opbounds/warnings.hpp"

namespace opbounds {

namespace {
constexpr std::uint64_t kKeepStream = 1;
constexpr std::uint64_t kValueStream = 2;
}  // namespace

std::string_view distribution_name(SketchDistribution d) {
    return d == SketchDistribution::rademacher ? "rademacher" : "gaussian";
}

SketchDistribution parse_distribution(std::string_view name) {
    if (name == "rademacher") return SketchDistribution::rademacher;
    if (name == "gaussian") return SketchDistribution::gaussian;
    fail(ErrorCategory::input, "unknown sketch distribution '" + std::string(name) + "'");
}

void SketchSpec::validate() const {
    require(rows >= 1 && cols >= 1, ErrorCategory::input, "sketch dimensions must be positive");
    require(std::isfinite(p) && p > 0.0 && p <= 1.0, ErrorCategory::input, "sketch keep probability p must lie in (0, 1]");
    if (scale) require(std::isfinite(*scale) && *scale > 0.0, ErrorCategory::input, "sketch scale must be positive");
}

double SketchSpec::entry_scale() const {
    return scale ? *scale : 1.0 / std::sqrt(static_cast<double>(rows) * p);
}

SketchMatrix::SketchMatrix(SketchSpec spec, Matrix dense)
    : spec_(std::move(spec)), sparse_storage_(false), dense_(std::move(dense)) {
    require(dense_.rows() == spec_.rows && dense_.cols() == spec_.cols, ErrorCategory::input,
            "sketch matrix shape disagrees with its spec");
}

SketchMatrix::SketchMatrix(SketchSpec spec, Sparse sparse)
    : spec_(std::move(spec)), sparse_storage_(true), sparse_(std::move(sparse)) {
    require(sparse_.rows() == spec_.rows && sparse_.cols() == spec_.cols, ErrorCategory::input,
            "sketch matrix shape disagrees with its spec");
}

SketchMatrix SketchMatrix::from_dense(const Matrix& s) {
    SketchSpec spec;
    spec.rows = static_cast<int>(s.rows());
    spec.cols = static_cast<int>(s.cols());
    spec.p = 1.0;
    spec.scale = 1.0;
    return SketchMatrix(spec, s);
}

Matrix SketchMatrix::dense() const { return sparse_storage_ ? Matrix(sparse_) : dense_; }

Eigen::Index SketchMatrix::nonzeros() const {
    return sparse_storage_ ? sparse_.nonZeros() : (dense_.array() != 0.0).count();
}

Matrix SketchMatrix::apply(const Matrix& b) const {
    require(b.rows() == cols(), ErrorCategory::input, "sketch apply: shape mismatch");
    return sparse_storage_ ? Matrix(sparse_ * b) : Matrix(dense_ * b);
}

Matrix SketchMatrix::apply_transpose(const Matrix& b) const {
    require(b.rows() == rows(), ErrorCategory::input, "sketch apply_transpose: shape mismatch");
    return sparse_storage_ ? Matrix(sparse_.transpose() * b) : Matrix(dense_.transpose() * b);
}

void SketchMatrix::write_text(std::ostream& os) const {
    const Matrix d = dense();
    os << std::setprecision(std::numeric_limits<double>::max_digits10);
    for (Eigen::Index i = 0; i < d.rows(); ++i) {
        for (Eigen::Index j = 0; j < d.cols(); ++j) {
            if (j > 0) os << ' ';
            os << d(i, j);
        }
        os << '\n';
    }
}

SketchMatrix SketchMatrix::read_text(std::istream& is) {
    std::vector<std::vector<double>> rows;
    std::string line;
    while (std::getline(is, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::istringstream ls(line);
        ls.imbue(std::locale::classic());
        std::vector<double> row;
        double v = 0.0;
        while (ls >> v) row.push_back(v);
        require(ls.eof(), ErrorCategory::io, "sketch text: unparsable value in row " + std::to_string(rows.size() + 1));
        if (!rows.empty())
            require(row.size() == rows.front().size(), ErrorCategory::io, "sketch text: ragged rows");
        rows.push_back(std::move(row));
    }
    require(!rows.empty() && !rows.front().empty(), ErrorCategory::io, "sketch text: empty matrix");
    Matrix m(rows.size(), rows.front().size());
    for (std::size_t i = 0; i < rows.size(); ++i)
        for (std::size_t j = 0; j < rows[i].size(); ++j) m(i, j) = rows[i][j];
    return from_dense(m);
}

Matrix SketchDecomposition::reconstruct() const { return subgaussian * subsample; }

SketchMatrix make_p_sparsified(const SketchSpec& spec) {
    spec.validate();
    if (spec.rows > spec.cols) warn("sketch has more rows than columns (s > n)");
    const CounterRng keep(spec.seed, kKeepStream);
    const CounterRng value(spec.seed, kValueStream);
    const double scale = spec.entry_scale();
    const auto s = static_cast<std::size_t>(spec.rows);
    const auto n = static_cast<std::size_t>(spec.cols);

    auto entry = [&](std::size_t i, std::size_t j) -> double {
        if (spec.p < 1.0 && keep.uniform(i, j) >= spec.p) return 0.0;
        const double z = spec.dist == SketchDistribution::rademacher ? value.rademacher(i, j) : value.gaussian(i, j);
        return z * scale;
    };

    Matrix dense(s, n);
    parallel_for(n, [&](std::size_t j) {
        for (std::size_t i = 0; i < s; ++i) dense(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = entry(i, j);
    });
    if (spec.p >= 0.25) return SketchMatrix(spec, std::move(dense));
    return SketchMatrix(spec, SketchMatrix::Sparse(dense.sparseView(0.0, 0.0)));
}

SketchDecomposition decompose_sketch(const SketchMatrix& s) {
    const Matrix d = s.dense();
    SketchDecomposition out;
    for (Eigen::Index j = 0; j < d.cols(); ++j)
        if ((d.col(j).array() != 0.0).any()) out.retained.push_back(static_cast<int>(j));
    const auto q = static_cast<Eigen::Index>(out.retained.size());
    out.subgaussian.resize(d.rows(), q);
    std::vector<Eigen::Triplet<double>> sel;
    sel.reserve(out.retained.size());
    for (Eigen::Index k = 0; k < q; ++k) {
        out.subgaussian.col(k) = d.col(out.retained[k]);
        sel.emplace_back(static_cast<int>(k), out.retained[k], 1.0);
    }
    out.subsample.resize(q, d.cols());
    out.subsample.setFromTriplets(sel.begin(), sel.end());
    return out;
}

double satisfiability_constant(double p) {
    require(std::isfinite(p) && p > 0.0 && p <= 1.0, ErrorCategory::domain, "satisfiability constant needs p in (0, 1]");
    return 2.0 / std::sqrt(p) * (1.0 + std::sqrt(std::log(5.0))) + 1.0;
}

}  // namespace opbounds
