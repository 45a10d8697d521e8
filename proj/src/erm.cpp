#include "opbounds/erm.hpp"

#include <cmath>
#include <sstream>

#include "opbounds/error.hpp"
#include "opbounds/warnings.hpp"

namespace opbounds {

void Dataset::validate() const {
    require(x.size() >= 1, ErrorCategory::input, "dataset is empty");
    require(y.rows() == x.size(), ErrorCategory::input, "dataset inputs and targets have different lengths");
    require(y.cols() >= 1, ErrorCategory::input, "dataset targets need at least one column");
    require(y.allFinite(), ErrorCategory::input, "dataset targets are not finite");
}

void FitConfig::validate() const {
    require(std::isfinite(lambda_n) && lambda_n > 0.0, ErrorCategory::input, "lambda_n must be positive");
    require(max_iters >= 1, ErrorCategory::input, "max_iters must be >= 1");
    require(std::isfinite(step_size) && step_size > 0.0, ErrorCategory::input, "step_size must be positive");
    require(std::isfinite(tol) && tol > 0.0, ErrorCategory::input, "tol must be positive");
}

Matrix FittedModel::expansion_coeffs() const {
    if (kind == FitKind::full) return coeffs;
    return sketch->apply_transpose(coeffs);
}

Vector FittedModel::predict(const Eigen::Ref<const Vector>& x) const {
    return predict_expansion(kernel, anchors, expansion_coeffs(), x);
}

Matrix FittedModel::predict(const PointSet& queries) const {
    return predict_expansion(kernel, anchors, expansion_coeffs(), queries);
}

Matrix ErmProblem::predictions(const Matrix& theta) const { return features * theta * output; }

double ErmProblem::objective(const Matrix& theta) const {
    const Matrix p = predictions(theta);
    const double data = empirical_risk(p, targets, loss);
    const double ridge = 0.5 * lambda_n * (regularizer * theta * output * theta.transpose()).trace();
    return data + ridge;
}

Matrix ErmProblem::subgradient(const Matrix& theta) const {
    const Matrix p = predictions(theta);
    Matrix e(p.rows(), p.cols());
    for (Eigen::Index i = 0; i < p.rows(); ++i)
        e.row(i) = loss_subgradient(loss, p.row(i).transpose(), targets.row(i).transpose()).transpose();
    const double n = static_cast<double>(p.rows());
    return features.transpose() * e * output / n + lambda_n * regularizer * theta * output;
}

namespace {

void check_output_invertible(const DecomposableKernel& kernel) {
    const Matrix& m = kernel.output.matrix();
    const double top = kernel.output.opnorm();
    require(top > 0.0 && min_eigenvalue(m) > 1e-12 * top, ErrorCategory::input,
            "output matrix M must be invertible (strictly positive definite)");
}

void check_inputs(const DecomposableKernel& kernel, const Dataset& data, const LossSpec& loss, const FitConfig& cfg) {
    data.validate();
    cfg.validate();
    require(data.output_dim() == kernel.output_dim(), ErrorCategory::input,
            "target dimension must equal the output matrix dimension");
    loss.validate(data.output_dim());
    check_output_invertible(kernel);
}

// Proximal operator of (t lambda / 2) Tr(Q B M B^T): solves B + t lambda Q B M = V
// in the joint eigenbasis of Q and M.
class RidgeProx {
public:
    RidgeProx(const Matrix& q, const Matrix& m) : q_(symmetric_eigen(q)), m_(symmetric_eigen(m)) {}

    [[nodiscard]] Matrix apply(const Matrix& v, double t_lambda) const {
        Matrix rotated = q_.vectors.transpose() * v * m_.vectors;
        for (Eigen::Index i = 0; i < rotated.rows(); ++i)
            for (Eigen::Index j = 0; j < rotated.cols(); ++j)
                rotated(i, j) /= 1.0 + t_lambda * std::max(0.0, q_.values(i)) * m_.values(j);
        return q_.vectors * rotated * m_.vectors.transpose();
    }

private:
    SymmetricEigen q_;
    SymmetricEigen m_;
};

FitDiagnostics proximal_subgradient(const ErmProblem& problem, const FitConfig& cfg, Matrix& theta) {
    const RidgeProx prox(problem.regularizer, problem.output);
    FitDiagnostics diag;
    diag.solver = "proximal-subgradient";
    double current = problem.objective(theta);
    diag.objective_history.push_back(current);
    double mapping_norm = std::numeric_limits<double>::infinity();
    int iter = 0;
    for (; iter < cfg.max_iters; ++iter) {
        const Matrix g = problem.subgradient(theta);
        // Smooth part handled by the prox; g carries the data term only.
        const Matrix data_g = g - problem.lambda_n * problem.regularizer * theta * problem.output;
        double t = cfg.step_size;
        bool accepted = false;
        for (int halving = 0; halving < 50; ++halving, t *= 0.5) {
            Matrix candidate = prox.apply(theta - t * data_g, t * problem.lambda_n);
            const double value = problem.objective(candidate);
            if (!std::isfinite(value)) continue;
            if (value < current) {
                mapping_norm = (theta - candidate).norm() / t;
                theta = std::move(candidate);
                current = value;
                accepted = true;
                break;
            }
        }
        if (!accepted) {
            mapping_norm = g.norm();
            break;
        }
        diag.objective_history.push_back(current);
        if (mapping_norm <= cfg.tol) {
            ++iter;
            diag.converged = true;
            break;
        }
    }
    diag.iterations = iter;
    diag.final_objective = current;
    diag.gradient_norm = mapping_norm;
    if (!diag.converged) {
        std::ostringstream os;
        os << "proximal subgradient stopped after " << iter << " iterations without reaching tol (step norm "
           << mapping_norm << ")";
        warn(os.str());
    }
    return diag;
}

FitDiagnostics finish_direct(const ErmProblem& problem, const Matrix& theta, std::string solver) {
    FitDiagnostics diag;
    diag.solver = std::move(solver);
    diag.iterations = 1;
    diag.converged = true;
    diag.final_objective = problem.objective(theta);
    diag.gradient_norm = problem.subgradient(theta).norm();
    diag.objective_history = {problem.objective(Matrix::Zero(theta.rows(), theta.cols())), diag.final_objective};
    return diag;
}

}  // namespace

ErmProblem full_problem(const DecomposableKernel& kernel, const Dataset& data, const LossSpec& loss, double lambda_n) {
    Matrix g = gram_scalar(kernel, data.x);
    return ErmProblem{g, g, kernel.output.matrix(), data.y, loss, lambda_n};
}

ErmProblem sketched_problem(const DecomposableKernel& kernel, const Dataset& data, const LossSpec& loss,
                            double lambda_n, const SketchMatrix& s) {
    require(s.cols() == data.size(), ErrorCategory::input, "sketch must have n columns");
    const Matrix g = gram_scalar(kernel, data.x);
    const Matrix sg = s.apply(g);  // S G, s x n
    Matrix q = s.apply(sg.transpose());
    q = 0.5 * (q + q.transpose());
    return ErmProblem{sg.transpose(), q, kernel.output.matrix(), data.y, loss, lambda_n};
}

FittedModel fit_full(const DecomposableKernel& kernel, const Dataset& data, const LossSpec& loss,
                     const FitConfig& cfg) {
    check_inputs(kernel, data, loss, cfg);
    const ErmProblem problem = full_problem(kernel, data, loss, cfg.lambda_n);
    const auto n = data.size();
    const auto m = data.output_dim();
    Matrix a = Matrix::Zero(n, m);
    FitDiagnostics diag;
    if (loss.family == LossFamily::squared) {
        // Stationarity: (2/n) G A M + lambda A = (2/n) Y, decoupled in the eigenbasis of M.
        const SymmetricEigen me = symmetric_eigen(problem.output);
        const Matrix y_rot = data.y * me.vectors;
        Matrix a_rot(n, m);
        const double scale = 2.0 / static_cast<double>(n);
        for (int j = 0; j < m; ++j) {
            Matrix system = scale * me.values(j) * problem.features;
            system.diagonal().array() += cfg.lambda_n;
            Eigen::LDLT<Matrix> ldlt(system);
            a_rot.col(j) = ldlt.solve(scale * y_rot.col(j));
        }
        a = a_rot * me.vectors.transpose();
        diag = finish_direct(problem, a, "direct-stationarity");
    } else {
        diag = proximal_subgradient(problem, cfg, a);
    }
    return FittedModel{FitKind::full, std::move(a), std::nullopt, kernel, data.x, std::move(diag)};
}

FittedModel fit_sketched(const DecomposableKernel& kernel, const Dataset& data, const LossSpec& loss,
                         const FitConfig& cfg, const SketchMatrix& s) {
    check_inputs(kernel, data, loss, cfg);
    const ErmProblem problem = sketched_problem(kernel, data, loss, cfg.lambda_n, s);
    const auto n = data.size();
    const auto m = data.output_dim();
    const auto rows = s.rows();
    Matrix gamma = Matrix::Zero(rows, m);
    FitDiagnostics diag;
    if (loss.family == LossFamily::squared) {
        // With G = R R^T and C = R^T S^T, each rotated output column solves the ridge
        // least-squares problem min (1/n)|sigma R C g - y|^2 + (lambda sigma/2)|C g|^2.
        const SymmetricEigen ge = symmetric_eigen(gram_scalar(kernel, data.x));
        const Matrix r = ge.vectors * ge.values.cwiseMax(0.0).cwiseSqrt().asDiagonal();
        const Matrix c = s.apply(r).transpose();  // R^T S^T, n x s
        const Matrix rc = r * c;
        const SymmetricEigen me = symmetric_eigen(problem.output);
        const Matrix y_rot = data.y * me.vectors;
        Matrix gamma_rot(rows, m);
        const double inv_root_n = 1.0 / std::sqrt(static_cast<double>(n));
        for (int j = 0; j < m; ++j) {
            const double sigma = me.values(j);
            Matrix stacked(2 * n, rows);
            stacked.topRows(n) = sigma * inv_root_n * rc;
            stacked.bottomRows(n) = std::sqrt(0.5 * cfg.lambda_n * sigma) * c;
            Vector rhs = Vector::Zero(2 * n);
            rhs.head(n) = inv_root_n * y_rot.col(j);
            gamma_rot.col(j) = stacked.completeOrthogonalDecomposition().solve(rhs);
        }
        gamma = gamma_rot * me.vectors.transpose();
        diag = finish_direct(problem, gamma, "direct-least-squares");
    } else {
        diag = proximal_subgradient(problem, cfg, gamma);
    }
    return FittedModel{FitKind::sketched, std::move(gamma), s, kernel, data.x, std::move(diag)};
}

double empirical_risk(const Matrix& predictions, const Matrix& targets, const LossSpec& loss) {
    require(predictions.rows() >= 1, ErrorCategory::input, "empirical risk of an empty dataset");
    require(predictions.rows() == targets.rows() && predictions.cols() == targets.cols(), ErrorCategory::input,
            "prediction and target shapes differ");
    double total = 0.0;
    for (Eigen::Index i = 0; i < predictions.rows(); ++i)
        total += loss_value(loss, predictions.row(i).transpose(), targets.row(i).transpose());
    return total / static_cast<double>(predictions.rows());
}

double empirical_risk(const Predictor& f, const Dataset& data, const LossSpec& loss) {
    require(data.size() >= 1, ErrorCategory::input, "empirical risk of an empty dataset");
    Matrix p(data.size(), data.output_dim());
    for (int i = 0; i < data.size(); ++i) p.row(i) = f(data.x.point(i)).transpose();
    return empirical_risk(p, data.y, loss);
}

double empirical_risk(const FittedModel& model, const Dataset& data, const LossSpec& loss) {
    return empirical_risk(model.predict(data.x), data.y, loss);
}

ExcessRiskBound excess_risk_bound_rhs(std::optional<double> J_l, double c, double lambda_n, double M_opnorm,
                                      double delta_sq, double kappa, double trM, int n, double conf_delta,
                                      std::optional<double> L_lip) {
    if (!J_l)
        fail(ErrorCategory::unbounded_loss,
             "excess-risk bound needs a Lipschitz loss; the squared loss has no global Lipschitz constant");
    require(conf_delta > 0.0 && conf_delta < 1.0, ErrorCategory::domain, "confidence delta must lie in (0, 1)");
    require(n >= 1, ErrorCategory::input, "n must be >= 1");
    require(*J_l >= 0.0 && c >= 0.0 && lambda_n >= 0.0 && M_opnorm >= 0.0 && delta_sq >= 0.0 && kappa >= 0.0 &&
                trM >= 0.0,
            ErrorCategory::input, "excess-risk bound arguments must be nonnegative");
    ExcessRiskBound b;
    b.L_used = L_lip.value_or(*J_l);
    const double nn = static_cast<double>(n);
    b.C = 1.0 + std::sqrt(6.0) * c;
    b.fit_term = *J_l * b.C * std::sqrt(lambda_n + M_opnorm * delta_sq);
    b.ridge_term = 0.5 * lambda_n;
    b.complexity_term = 8.0 * b.L_used * std::sqrt(kappa * trM / nn);
    b.confidence_term = 2.0 * std::sqrt(8.0 * std::log(4.0 / conf_delta) / nn);
    b.value = b.fit_term + b.ridge_term + b.complexity_term + b.confidence_term;
    return b;
}

}  // namespace opbounds
