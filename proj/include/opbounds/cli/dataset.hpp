#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>

#include "opbounds/erm.hpp"
#include "opbounds/kernels.hpp"

namespace opbounds::cli {

struct SynthSpec {
    int n = 50;
    int d = 2;
    int m = 2;
    double noise = 0.1;         // per-coordinate standard deviation
    int teacher_anchors = 10;
    double teacher_scale = 1.0;  // coefficient standard deviation
    double input_scale = 1.0;    // inputs uniform in [-input_scale, input_scale]^d
    ScalarKernelSpec teacher_kernel;
    std::uint64_t seed = 0;

    void validate() const;
};

/// f*(x) = sum_j k(x, z_j) c_j with identity output matrix.
struct Teacher {
    DecomposableKernel kernel;
    PointSet anchors;
    Matrix coeffs;

    [[nodiscard]] Matrix predict(const PointSet& x) const;
};

struct SynthDataset {
    Dataset data;
    Teacher teacher;
    Matrix clean;  // f*(x_i)
};

SynthDataset synth_dataset(const SynthSpec& spec);

/// Fresh inputs and noise from the same teacher, on a separate random stream.
Dataset synth_holdout(const SynthSpec& spec, const Teacher& teacher, int n);

/// Header x1..xd,y1..ym then one row per sample.
void write_dataset_csv(std::ostream& os, const Dataset& data);
Dataset read_dataset_csv(std::istream& is);
Dataset read_dataset_csv(const std::filesystem::path& file);

}  // namespace opbounds::cli
