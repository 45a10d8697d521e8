#include "opbounds/cli/dataset.hpp"

#include <fstream>
#include <limits>
#include <sstream>
#include <string>
#include <vector>

#include "opbounds/error.hpp"
#include "opbounds/rng.hpp"

namespace opbounds::cli {

void SynthSpec::validate() const {
    require(n >= 1 && d >= 1 && m >= 1, ErrorCategory::input, "synthetic n, d and m must be >= 1");
    require(noise >= 0.0, ErrorCategory::input, "noise must be nonnegative");
    require(teacher_anchors >= 1, ErrorCategory::input, "teacher needs at least one anchor");
    require(teacher_scale >= 0.0 && input_scale > 0.0, ErrorCategory::input, "scales must be positive");
    ScalarKernelSpec k = teacher_kernel;
    k.dimension = d;
    k.validate();
}

Matrix Teacher::predict(const PointSet& x) const { return predict_expansion(kernel, anchors, coeffs, x); }

namespace {

Matrix uniform_points(const CounterRng& rng, int count, int d, double scale) {
    Matrix x(count, d);
    for (int i = 0; i < count; ++i)
        for (int j = 0; j < d; ++j) x(i, j) = rng.uniform(-scale, scale, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(j));
    return x;
}

Matrix gaussian_matrix(const CounterRng& rng, int rows, int cols, double sd) {
    Matrix x(rows, cols);
    for (int i = 0; i < rows; ++i)
        for (int j = 0; j < cols; ++j) x(i, j) = sd * rng.gaussian(static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(j));
    return x;
}

}  // namespace

SynthDataset synth_dataset(const SynthSpec& spec) {
    spec.validate();
    const CounterRng rng(spec.seed, 41);
    SynthDataset out;
    ScalarKernelSpec k = spec.teacher_kernel;
    k.dimension = spec.d;
    out.teacher.kernel = DecomposableKernel::with_default_kappa(k, OutputMatrix::identity(spec.m));
    out.teacher.anchors = PointSet(uniform_points(rng.child(1), spec.teacher_anchors, spec.d, spec.input_scale));
    out.teacher.coeffs = gaussian_matrix(rng.child(2), spec.teacher_anchors, spec.m, spec.teacher_scale);
    const PointSet x(uniform_points(rng.child(3), spec.n, spec.d, spec.input_scale));
    out.clean = out.teacher.predict(x);
    out.data.x = x;
    out.data.y = out.clean + gaussian_matrix(rng.child(4), spec.n, spec.m, spec.noise);
    return out;
}

Dataset synth_holdout(const SynthSpec& spec, const Teacher& teacher, int n) {
    require(n >= 1, ErrorCategory::input, "holdout size must be >= 1");
    const CounterRng rng(spec.seed, 43);
    Dataset out;
    out.x = PointSet(uniform_points(rng.child(3), n, spec.d, spec.input_scale));
    out.y = teacher.predict(out.x) + gaussian_matrix(rng.child(4), n, spec.m, spec.noise);
    return out;
}

void write_dataset_csv(std::ostream& os, const Dataset& data) {
    std::ostringstream buf;
    buf.imbue(std::locale::classic());
    buf.precision(std::numeric_limits<double>::max_digits10);
    const int d = data.x.dim();
    const int m = data.output_dim();
    for (int j = 0; j < d; ++j) buf << (j ? "," : "") << 'x' << j + 1;
    for (int j = 0; j < m; ++j) buf << ",y" << j + 1;
    buf << '\n';
    for (int i = 0; i < data.size(); ++i) {
        for (int j = 0; j < d; ++j) buf << (j ? "," : "") << data.x.rows()(i, j);
        for (int j = 0; j < m; ++j) buf << ',' << data.y(i, j);
        buf << '\n';
    }
    os << buf.str();
}

Dataset read_dataset_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line)) fail(ErrorCategory::input, "dataset CSV is empty");
    if (!line.empty() && line.back() == '\r') line.pop_back();
    int d = 0;
    int m = 0;
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) {
            const char kind = cell.empty() ? '?' : cell.front();
            const std::string expect = std::string(1, kind) + std::to_string(kind == 'x' ? d + 1 : m + 1);
            if (kind == 'x' && m == 0 && cell == expect) {
                ++d;
            } else if (kind == 'y' && cell == expect) {
                ++m;
            } else {
                fail(ErrorCategory::input, "dataset header must be x1..xd,y1..ym; got '" + cell + "'");
            }
        }
    }
    require(d >= 1 && m >= 1, ErrorCategory::input, "dataset header needs at least one x and one y column");
    std::vector<double> values;
    int rows = 0;
    while (std::getline(is, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        int count = 0;
        while (std::getline(ss, cell, ',')) {
            std::istringstream cs(cell);
            cs.imbue(std::locale::classic());
            double v = 0.0;
            if (!(cs >> v) || !(cs >> std::ws).eof())
                fail(ErrorCategory::input, "bad number '" + cell + "' on data row " + std::to_string(rows + 1));
            values.push_back(v);
            ++count;
        }
        require(count == d + m, ErrorCategory::input, "data row " + std::to_string(rows + 1) + " has the wrong width");
        ++rows;
    }
    require(rows >= 1, ErrorCategory::input, "dataset CSV has no rows");
    const Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> all(
        values.data(), rows, d + m);
    Dataset out;
    out.x = PointSet(all.leftCols(d));
    out.y = all.rightCols(m);
    return out;
}

Dataset read_dataset_csv(const std::filesystem::path& file) {
    std::ifstream in(file);
    if (!in) fail(ErrorCategory::io, "cannot open dataset " + file.string());
    return read_dataset_csv(in);
}

}  // namespace opbounds::cli
