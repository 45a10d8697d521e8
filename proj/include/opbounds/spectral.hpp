#pragma once

#include <vector>

#include "opbounds/linalg.hpp"
#include "opbounds/sketching.hpp"

namespace opbounds {

/// G_k / n = U diag(mu) U^T with mu descending and tiny negatives clipped to 0.
struct SpectralDecomposition {
    Matrix U;
    Vector mu;
};

struct SpectralReport {
    double delta_sq = 0.0;
    int d_n = 1;
    double norm1 = 0.0;  // ||(S U1)^T S U1 - I||
    double norm2 = 0.0;  // ||S U2 D2^{1/2}||
    double c_used = 0.0;
    bool satisfiable = false;
};

SpectralDecomposition eigendecompose_scaled_gram(const Matrix& gram, int n);

/// psi(delta) = sqrt((1/n) sum_i min(delta^2, mu_i)).
double critical_psi(const Vector& mu, double delta);

/// Minimal delta^2 with psi(delta) <= delta^2, by bisection on delta.
double critical_radius(const Vector& mu);

/// First 1-based index j with mu_j <= delta_sq, or n.
int statistical_dimension(const Vector& mu, double delta_sq);

/// Pure verdict used by check_satisfiability.
bool satisfiability_verdict(double norm1, double norm2, double c, double delta_sq);

SpectralReport check_satisfiability(const SketchMatrix& s, const SpectralDecomposition& dec, int d_n, double delta_sq,
                                    double c);

/// max over a in range(bottom) of (a^T top a) / (a^T bottom a).
double pencil_max(const Matrix& top, const Matrix& bottom);

/// Same quantity plus the whitened problem, for callers that differentiate it.
struct PencilSolution {
    double value = 0.0;
    Vector top_vector;   // maximizer a with a^T bottom a = 1
    double gap = 0.0;    // distance to the second generalized eigenvalue
    int rank = 0;        // dimension of range(bottom) used
};

PencilSolution solve_pencil(const Matrix& top, const Matrix& bottom);

}  // namespace opbounds
