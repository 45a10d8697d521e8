#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "opbounds/kernels.hpp"
#include "opbounds/losses.hpp"
#include "opbounds/sketching.hpp"

namespace opbounds {

/// Training pairs: inputs as a point set, targets as an n x m matrix.
struct Dataset {
    PointSet x;
    Matrix y;

    [[nodiscard]] int size() const noexcept { return x.size(); }
    [[nodiscard]] int output_dim() const noexcept { return static_cast<int>(y.cols()); }
    void validate() const;
};

struct FitConfig {
    double lambda_n = 1e-2;
    int max_iters = 500;
    double step_size = 1.0;
    double tol = 1e-6;
    std::uint64_t seed = 0;

    void validate() const;
};

struct FitDiagnostics {
    double final_objective = 0.0;
    double gradient_norm = 0.0;
    int iterations = 0;
    bool converged = false;
    std::string solver;
    std::vector<double> objective_history;  // accepted iterates, starting point first
};

enum class FitKind { full, sketched };

struct FittedModel {
    FitKind kind = FitKind::full;
    Matrix coeffs;  // A (n x m) or Gamma (s x m)
    std::optional<SketchMatrix> sketch;
    DecomposableKernel kernel;
    PointSet anchors;
    FitDiagnostics diagnostics;

    /// Per-anchor expansion coefficients: A, or S^T Gamma.
    [[nodiscard]] Matrix expansion_coeffs() const;
    [[nodiscard]] Vector predict(const Eigen::Ref<const Vector>& x) const;
    [[nodiscard]] Matrix predict(const PointSet& queries) const;
};

/// (1/n) sum_i loss([K Theta M]_i, y_i) + (lambda/2) Tr(Q Theta M Theta^T). Full fits use
/// K = Q = G_k; sketched fits use K = G_k S^T and Q = S G_k S^T.
struct ErmProblem {
    Matrix features;    // K, n x p
    Matrix regularizer; // Q, p x p
    Matrix output;      // M, m x m
    Matrix targets;     // Y, n x m
    LossSpec loss;
    double lambda_n = 0.0;

    [[nodiscard]] Matrix predictions(const Matrix& theta) const;
    [[nodiscard]] double objective(const Matrix& theta) const;
    /// A subgradient of the objective (exact gradient for smooth losses).
    [[nodiscard]] Matrix subgradient(const Matrix& theta) const;
};

ErmProblem full_problem(const DecomposableKernel& kernel, const Dataset& data, const LossSpec& loss, double lambda_n);
ErmProblem sketched_problem(const DecomposableKernel& kernel, const Dataset& data, const LossSpec& loss,
                            double lambda_n, const SketchMatrix& s);

FittedModel fit_full(const DecomposableKernel& kernel, const Dataset& data, const LossSpec& loss,
                     const FitConfig& cfg);

FittedModel fit_sketched(const DecomposableKernel& kernel, const Dataset& data, const LossSpec& loss,
                         const FitConfig& cfg, const SketchMatrix& s);

using Predictor = std::function<Vector(const Eigen::Ref<const Vector>&)>;

double empirical_risk(const Matrix& predictions, const Matrix& targets, const LossSpec& loss);
double empirical_risk(const Predictor& f, const Dataset& data, const LossSpec& loss);
double empirical_risk(const FittedModel& model, const Dataset& data, const LossSpec& loss);

struct ExcessRiskBound {
    double value = 0.0;
    double C = 0.0;                 // 1 + sqrt(6) c
    double fit_term = 0.0;          // J C sqrt(lambda + ||M|| delta^2)
    double ridge_term = 0.0;        // lambda / 2
    double complexity_term = 0.0;   // 8 L sqrt(kappa Tr(M) / n)
    double confidence_term = 0.0;   // 2 sqrt(8 log(4/delta) / n)
    double L_used = 0.0;
};

/// Right-hand side gap of the sketched excess-risk bound. J_l = nullopt marks an
/// unbounded (non-Lipschitz) loss and is refused. L_lip defaults to J_l.
ExcessRiskBound excess_risk_bound_rhs(std::optional<double> J_l, double c, double lambda_n, double M_opnorm,
                                      double delta_sq, double kappa, double trM, int n, double conf_delta,
                                      std::optional<double> L_lip = std::nullopt);

}  // namespace opbounds
