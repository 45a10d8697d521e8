#pragma once

#include <cstdint>
#include <optional>
#include <string_view>
#include <vector>

#include "opbounds/erm.hpp"
#include "opbounds/kernels.hpp"

namespace opbounds {

/// f(x) = sum_i k(x, z_i) M c_i, i.e. row form k(x, Z) C M.
struct VVLayer {
    ScalarKernelSpec kernel;
    OutputMatrix M;
    PointSet anchors;  // Z, in the layer's input space
    Matrix coeffs;     // C, |Z| x m_j
    std::optional<double> capacity;

    [[nodiscard]] int in_dim() const noexcept { return anchors.dim(); }
    [[nodiscard]] int out_dim() const noexcept { return M.dim(); }
};

struct LayeredModel {
    std::vector<VVLayer> layers;
    int input_dim = 1;
    int output_dim = 1;

    void validate() const;
    [[nodiscard]] int depth() const noexcept { return static_cast<int>(layers.size()); }
};

enum class GradMode { analytic, finite_diff };
std::string_view grad_mode_name(GradMode g);
GradMode parse_grad_mode(std::string_view name);

struct TrainConfig {
    double lambda1 = 0.0;
    double lambda2 = 0.0;
    double step = 1.0;
    int iters = 200;
    GradMode grad_mode = GradMode::analytic;
    std::uint64_t seed = 0;
    double tol = 1e-8;             // stop when the gradient norm falls below
    bool project_capacity = false;  // rescale C_L when |f_L| > B_L

    void validate() const;
};

/// Layer outputs on a point set: h[0] = inputs, h[j] = f_j(h[j-1]).
std::vector<Matrix> hidden(const LayeredModel& model, const PointSet& x);
Vector forward(const LayeredModel& model, const Eigen::Ref<const Vector>& x);
Matrix forward(const LayeredModel& model, const PointSet& x);

/// Probe vectors y_i; rows that are zero fall back to e_{i mod m}.
Matrix default_probes(const Matrix& y);

/// sqrt of the top generalized eigenvalue of (G_top, G_bottom), where
/// G_bottom[p,q] = k_1(x_p, x_q) y_p^T M y_q and G_top uses k_L at h_{L-1}.
double pf_product_norm(const LayeredModel& model, const PointSet& x, const Matrix& probes);

/// Restricted PF norm of each layer map on the chain of spans; their product
/// bounds pf_product_norm from above.
std::vector<double> pf_layer_norms(const LayeredModel& model, const PointSet& x, const Matrix& probes);

double top_layer_norm(const VVLayer& layer);

struct Prop1Report {
    double pf_norm = 0.0;
    double top_norm = 0.0;
    double inv_n = 0.0;
    double trace_root = 0.0;  // sqrt(sum_i Tr K_1(x_i, x_i))
    double total = 0.0;
    [[nodiscard]] double recompute() const noexcept { return inv_n * pf_norm * top_norm * trace_root; }
};

Prop1Report prop1_bound(const LayeredModel& model, const PointSet& x, const Matrix& probes);

enum class Remark2Mode { printed, consistent };
std::string_view remark2_mode_name(Remark2Mode m);

/// printed: sqrt(kappa Tr M_1) / n * pf * top; consistent: sqrt(kappa Tr M_1 / n) * pf * top.
double remark2_bound(double pf_norm, double top_norm, double kappa, double trM1, int n, Remark2Mode mode);
double remark2_bound(const LayeredModel& model, const PointSet& x, const Matrix& probes, double kappa, double trM1,
                     Remark2Mode mode);

struct ObjectiveTerms {
    double data = 0.0;  // (1/n) sum |f(x_i) - y_i|^2
    double pf_norm = 0.0;
    double top_norm = 0.0;
    double total = 0.0;
};

ObjectiveTerms objective(const LayeredModel& model, const Dataset& data, double lambda1, double lambda2,
                         const Matrix& probes);
ObjectiveTerms objective(const LayeredModel& model, const Dataset& data, double lambda1, double lambda2);

/// One matrix per layer, shaped like C_j. Anchors are fixed.
using ModelGradient = std::vector<Matrix>;

ModelGradient gradient(const LayeredModel& model, const Dataset& data, double lambda1, double lambda2,
                       GradMode mode, const Matrix& probes);
ModelGradient gradient(const LayeredModel& model, const Dataset& data, double lambda1, double lambda2,
                       GradMode mode);
double gradient_norm(const ModelGradient& g);

struct LayerInit {
    ScalarKernelSpec kernel;
    OutputMatrix M;
    std::optional<double> capacity;
};

/// Coefficients i.i.d. uniform in [-0.1, 0.1]; anchors are the inputs propagated
/// through the freshly initialized layers below.
LayeredModel init_model(const std::vector<LayerInit>& layers, const PointSet& x, std::uint64_t seed);

struct TrainStep {
    int iteration = 0;
    double objective = 0.0;
    double data = 0.0;
    double pf_norm = 0.0;
    double top_norm = 0.0;
    double gradient_norm = 0.0;
    double step = 0.0;  // accepted step length, 0 on the final record
};

struct TrainResult {
    LayeredModel model;
    std::vector<TrainStep> trajectory;
    int iterations = 0;
    bool converged = false;
};

TrainResult train(const LayeredModel& init, const Dataset& data, const TrainConfig& cfg);

enum class RefineDirection { shrink, enlarge };
std::string_view refine_direction_name(RefineDirection d);
RefineDirection parse_refine_direction(std::string_view name);

/// Replaces every M_j by A after checking M_j - A (shrink) or A - M_j (enlarge) is PSD.
LayeredModel refine_kernel(const LayeredModel& model, const Matrix& A, RefineDirection direction);

}  // namespace opbounds
