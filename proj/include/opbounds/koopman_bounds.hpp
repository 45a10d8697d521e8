#pragma once

#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "opbounds/complexity.hpp"
#include "opbounds/kernels.hpp"

namespace opbounds {

enum class Activation { identity, tanh, sigmoid };

std::string_view activation_name(Activation a);
Activation parse_activation(std::string_view name);

/// One layer x -> act(W x + a). The activation of the last layer is ignored; the
/// network output is g applied to the last pre-activation.
struct LayerSpec {
    Matrix W;  // d_l x d_{l-1}
    Vector a;  // d_l
    Activation activation = Activation::identity;
    double activation_koopman_norm = 1.0;  // ||K_sigma||, user supplied
    double sobolev_order_in = 1.0;         // s_{l-1}
    double sobolev_order_out = 1.0;        // s_l
    double ratio_G = 1.0;                  // restriction-norm ratio G_l, user supplied

    [[nodiscard]] int in_dim() const noexcept { return static_cast<int>(W.cols()); }
    [[nodiscard]] int out_dim() const noexcept { return static_cast<int>(W.rows()); }
};

struct InjectivityClass {
    double C = 1.0;  // ||W|| <= C
    double D = 1.0;  // det(W^T W)^{1/2} >= D
};

/// Network g o b_L o W_L o act_{L-1} o ... o act_1 o b_1 o W_1 with g(x) = v exp(-|x|^2).
struct NetworkSpec {
    std::vector<LayerSpec> layers;
    double g_norm = 1.0;  // ||g|| in H^{s_L}
    int output_dim = 1;   // m
    Vector g_vector;      // v; empty means e_1
    std::optional<InjectivityClass> injectivity;

    void validate() const;
    [[nodiscard]] int depth() const noexcept { return static_cast<int>(layers.size()); }
};

/// Output of the first `upto` layers, activations included except on layer L.
Vector forward_features(const NetworkSpec& net, const Eigen::Ref<const Vector>& x, int upto);
PointSet forward_features(const NetworkSpec& net, const PointSet& x, int upto);
Vector evaluate_network(const NetworkSpec& net, const Eigen::Ref<const Vector>& x);

/// sup over w in range(W) of ((1 + |W^T w|^2) / (1 + |w|^2))^{s/2} = max(1, sigma_max)^s.
double spectral_ratio_factor(const Matrix& W, double s_in);

/// det(W^T W)^{1/4} via singular values; throws for non-injective W.
double det_quarter_root(const Matrix& W);

struct LayerVerdict {
    bool dimension_ok = false;
    bool norm_ok = false;
    bool determinant_ok = false;
    [[nodiscard]] bool ok() const noexcept { return dimension_ok && norm_ok && determinant_ok; }
};

struct InjectivityVerdict {
    std::vector<LayerVerdict> layers;
    bool all_ok = false;
};

InjectivityVerdict check_injectivity_class(const NetworkSpec& net);

enum class BoundFamily { lemma1, theorem2, peeled, trace };
std::string_view bound_family_name(BoundFamily f);

struct LayerFactors {
    int layer = 0;  // 1-based
    double spectral_ratio = 1.0;
    double det_root = 1.0;
    double koopman_norm = 1.0;
    double ratio_G = 1.0;
    [[nodiscard]] double eta() const noexcept { return ratio_G * spectral_ratio * koopman_norm / det_root; }
};

struct CombinedPieces {
    int split = 0;
    double eta_product = 1.0;
    double upper_complexity = 0.0;
    double upper_complexity_se = 0.0;
    double trace_factor = 0.0;
    double approximation_term = 0.0;
    int approximation_best_index = 0;
    int rejected_draws = 0;
};

struct BoundReport {
    BoundFamily family = BoundFamily::lemma1;
    std::vector<LayerFactors> layers;
    double prefactor = 1.0;  // lemma1: g_norm * trace bound
    double total = 0.0;
    std::string label;
    std::optional<CombinedPieces> combined;

    /// Total rebuilt from the reported pieces.
    [[nodiscard]] double recompute() const;
};

BoundReport lemma1_bound(const NetworkSpec& net, double kappa, double trM, int n);

/// Finite kernel expansion sum_j k(., z_j) M c_j in the RKHS of a decomposable kernel.
struct KernelExpansion {
    PointSet anchors;
    Matrix coeffs;
};

double rkhs_norm(const DecomposableKernel& kernel, const KernelExpansion& h);
Matrix evaluate_expansion(const DecomposableKernel& kernel, const KernelExpansion& h, const PointSet& at);

struct ApproximationTerm {
    double value = 0.0;
    int best_index = 0;
    int used_draws = 0;
    int rejected_draws = 0;
    double mean_gamma_sq = 0.0;
};

/// inf_{h'} E^{1/2}[ sup_{h''} | h' - gamma |h''| / |v~| v~ |^2 ] with v = sum sigma_i K_in(., x_i),
/// v~ = sum sigma_i K_mid(., x~_i), gamma = |v| / |v~|, all on coupled sign draws.
ApproximationTerm approximation_term_mc(const std::vector<KernelExpansion>& upper_class, const PointSet& data_in,
                                        const PointSet& data_mid, const DecomposableKernel& kernel_in,
                                        const DecomposableKernel& kernel_mid, const McConfig& cfg);

/// Layer-split bound: prod_{l <= split} eta_l * (R(upper) + sqrt(kappa_mid Tr(M_mid)/n) * approximation).
BoundReport theorem2_combined_bound(const NetworkSpec& net, int split, const std::vector<KernelExpansion>& upper_class,
                                    const PointSet& data, const DecomposableKernel& kernel_in,
                                    const DecomposableKernel& kernel_mid, const McConfig& cfg);

/// prod_{j > split} |W_j|_F * prod_{j <= split} |W_j|_2, up to a universal constant.
double peeled_bound(const NetworkSpec& net, int split);

}  // namespace opbounds
