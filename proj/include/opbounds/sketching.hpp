#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string_view>

#include <Eigen/SparseCore>

#include "opbounds/linalg.hpp"

namespace opbounds {

enum class SketchDistribution { rademacher, gaussian };

std::string_view distribution_name(SketchDistribution d);
SketchDistribution parse_distribution(std::string_view name);

struct SketchSpec {
    int rows = 1;     // s
    int cols = 1;     // n
    double p = 1.0;   // Bernoulli keep probability
    SketchDistribution dist = SketchDistribution::gaussian;
    std::uint64_t seed = 0;
    /// Overrides the entry scale 1/sqrt(s p) when set.
    std::optional<double> scale;

    void validate() const;
    [[nodiscard]] double entry_scale() const;
};

/// s x n p-sparsified sketch. Entries are b_ij z_ij * scale with b_ij ~ Bernoulli(p)
/// and z_ij Rademacher or standard normal. Stored as triplets when p < 1/4.
class SketchMatrix {
public:
    using Sparse = Eigen::SparseMatrix<double, Eigen::ColMajor>;

    SketchMatrix(SketchSpec spec, Matrix dense);
    SketchMatrix(SketchSpec spec, Sparse sparse);

    /// Wraps an explicit matrix (e.g. the identity) as a sketch.
    static SketchMatrix from_dense(const Matrix& s);

    [[nodiscard]] const SketchSpec& spec() const noexcept { return spec_; }
    [[nodiscard]] int rows() const noexcept { return spec_.rows; }
    [[nodiscard]] int cols() const noexcept { return spec_.cols; }
    [[nodiscard]] bool is_sparse() const noexcept { return sparse_storage_; }
    [[nodiscard]] Matrix dense() const;
    [[nodiscard]] Eigen::Index nonzeros() const;

    /// S * B
    [[nodiscard]] Matrix apply(const Matrix& b) const;
    /// S^T * B
    [[nodiscard]] Matrix apply_transpose(const Matrix& b) const;

    /// Rows of space-separated reals with round-trip precision.
    void write_text(std::ostream& os) const;
    static SketchMatrix read_text(std::istream& is);

private:
    SketchSpec spec_;
    bool sparse_storage_ = false;
    Matrix dense_;
    Sparse sparse_;
};

/// S = subgaussian * subsample where subsample keeps the q columns of S that
/// carry at least one nonzero.
struct SketchDecomposition {
    Matrix subgaussian;                           // s x q
    Eigen::SparseMatrix<double> subsample;        // q x n selection
    std::vector<int> retained;                    // column indices, ascending

    [[nodiscard]] Matrix reconstruct() const;
};

SketchMatrix make_p_sparsified(const SketchSpec& spec);

SketchDecomposition decompose_sketch(const SketchMatrix& s);

/// c = (2/sqrt(p)) (1 + sqrt(ln 5)) + 1
double satisfiability_constant(double p);

}  // namespace opbounds
