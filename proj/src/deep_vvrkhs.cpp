#include "opbounds/deep_vvrkhs.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "opbounds/error.hpp"
#include "opbounds/rng.hpp"
#include "opbounds/spectral.hpp"
#include "opbounds/warnings.hpp"

namespace opbounds {

std::string_view grad_mode_name(GradMode g) { return g == GradMode::analytic ? "analytic" : "finite-diff"; }

GradMode parse_grad_mode(std::string_view name) {
    if (name == "analytic") return GradMode::analytic;
    if (name == "finite-diff") return GradMode::finite_diff;
    fail(ErrorCategory::input, "unknown gradient mode '" + std::string(name) + "'");
}

std::string_view remark2_mode_name(Remark2Mode m) { return m == Remark2Mode::printed ? "printed" : "consistent"; }

std::string_view refine_direction_name(RefineDirection d) {
    return d == RefineDirection::shrink ? "shrink" : "enlarge";
}

RefineDirection parse_refine_direction(std::string_view name) {
    if (name == "shrink") return RefineDirection::shrink;
    if (name == "enlarge") return RefineDirection::enlarge;
    fail(ErrorCategory::input, "unknown refinement direction '" + std::string(name) + "'");
}

void LayeredModel::validate() const {
    require(!layers.empty(), ErrorCategory::input, "deep model needs at least one layer");
    int width = input_dim;
    for (std::size_t j = 0; j < layers.size(); ++j) {
        const auto& l = layers[j];
        const std::string tag = "layer " + std::to_string(j + 1);
        l.kernel.validate();
        require(l.anchors.size() >= 1, ErrorCategory::input, tag + ": needs at least one anchor");
        require(l.in_dim() == width, ErrorCategory::input, tag + ": anchor dimension does not chain");
        require(l.kernel.dimension == width, ErrorCategory::input, tag + ": kernel dimension does not match input");
        require(l.M.dim() >= 1, ErrorCategory::input, tag + ": output matrix is empty");
        require(l.coeffs.rows() == l.anchors.size() && l.coeffs.cols() == l.out_dim(), ErrorCategory::input,
                tag + ": coefficients must be |Z| x m_j");
        require(!l.capacity || *l.capacity > 0.0, ErrorCategory::input, tag + ": capacity must be positive");
        width = l.out_dim();
    }
    require(width == output_dim, ErrorCategory::input, "last layer width does not match the output dimension");
}

void TrainConfig::validate() const {
    require(lambda1 >= 0.0 && lambda2 >= 0.0, ErrorCategory::input, "lambda1 and lambda2 must be nonnegative");
    require(step > 0.0 && std::isfinite(step), ErrorCategory::input, "step must be positive");
    require(iters >= 1, ErrorCategory::input, "iters must be >= 1");
    require(tol >= 0.0, ErrorCategory::input, "tol must be nonnegative");
}

namespace {

// Forward pass keeping the cross Grams k_j(h_{j-1}, Z_j).
struct Pass {
    std::vector<Matrix> h;
    std::vector<Matrix> k;
};

Pass run_pass(const LayeredModel& model, const PointSet& x) {
    require(x.dim() == model.input_dim, ErrorCategory::input, "input dimension does not match the model");
    Pass p;
    p.h.push_back(x.rows());
    for (const auto& layer : model.layers) {
        p.k.push_back(cross_gram(layer.kernel, PointSet(p.h.back()), layer.anchors));
        p.h.push_back(p.k.back() * layer.coeffs * layer.M.matrix());
    }
    return p;
}

void check_probes(const LayeredModel& model, const PointSet& x, const Matrix& probes) {
    require(x.size() >= 1, ErrorCategory::input, "PF norm needs at least one data point");
    require(probes.rows() == x.size() && probes.cols() == model.output_dim, ErrorCategory::input,
            "probes must be n x m");
    for (Eigen::Index i = 0; i < probes.rows(); ++i)
        require(probes.row(i).squaredNorm() > 0.0, ErrorCategory::input, "probe vectors must be nonzero");
}

struct PfPieces {
    Matrix top;
    Matrix bottom;
    Matrix py;  // y_p^T M y_q
};

PfPieces pf_pieces(const LayeredModel& model, const Pass& pass, const Matrix& probes) {
    const Matrix& my = model.layers.back().M.matrix();
    require(my.rows() == probes.cols(), ErrorCategory::input, "probe dimension does not match the top output matrix");
    PfPieces out;
    out.py = probes * my * probes.transpose();
    const PointSet x(pass.h.front());
    out.bottom = gram_scalar(model.layers.front().kernel, x).cwiseProduct(out.py);
    const PointSet top_in(pass.h[pass.h.size() - 2]);
    out.top = gram_scalar(model.layers.back().kernel, top_in).cwiseProduct(out.py);
    return out;
}

double top_norm_sq(const VVLayer& layer) {
    const Matrix g = gram_scalar(layer.kernel, layer.anchors);
    return (layer.coeffs.transpose() * g * layer.coeffs * layer.M.matrix()).trace();
}

ObjectiveTerms evaluate_terms(const LayeredModel& model, const Dataset& data, const Pass& pass, double lambda1,
                              double lambda2, const Matrix& probes) {
    ObjectiveTerms t;
    t.data = (pass.h.back() - data.y).squaredNorm() / data.size();
    if (lambda1 != 0.0) {
        const PfPieces pf = pf_pieces(model, pass, probes);
        t.pf_norm = std::sqrt(std::max(0.0, pencil_max(pf.top, pf.bottom)));
    }
    t.top_norm = std::sqrt(std::max(0.0, top_norm_sq(model.layers.back())));
    t.total = t.data + lambda1 * t.pf_norm + lambda2 * t.top_norm;
    return t;
}

void check_data(const LayeredModel& model, const Dataset& data) {
    data.validate();
    require(data.output_dim() == model.output_dim, ErrorCategory::input, "target dimension does not match the model");
}

}  // namespace

std::vector<Matrix> hidden(const LayeredModel& model, const PointSet& x) {
    model.validate();
    return run_pass(model, x).h;
}

Matrix forward(const LayeredModel& model, const PointSet& x) { return hidden(model, x).back(); }

Vector forward(const LayeredModel& model, const Eigen::Ref<const Vector>& x) {
    Matrix row = x.transpose();
    return forward(model, PointSet(std::move(row))).row(0).transpose();
}

Matrix default_probes(const Matrix& y) {
    Matrix p = y;
    const auto m = y.cols();
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
        if (p.row(i).squaredNorm() == 0.0) {
            p.row(i).setZero();
            p(i, i % m) = 1.0;
        }
    }
    return p;
}

double pf_product_norm(const LayeredModel& model, const PointSet& x, const Matrix& probes) {
    model.validate();
    check_probes(model, x, probes);
    const PfPieces pf = pf_pieces(model, run_pass(model, x), probes);
    return std::sqrt(std::max(0.0, pencil_max(pf.top, pf.bottom)));
}

std::vector<double> pf_layer_norms(const LayeredModel& model, const PointSet& x, const Matrix& probes) {
    model.validate();
    check_probes(model, x, probes);
    const Pass pass = run_pass(model, x);
    const Matrix py = probes * model.layers.back().M.matrix() * probes.transpose();
    std::vector<double> out;
    for (int j = 0; j + 1 < model.depth(); ++j) {
        const auto ju = static_cast<std::size_t>(j);
        const Matrix bottom = gram_scalar(model.layers[ju].kernel, PointSet(pass.h[ju])).cwiseProduct(py);
        const Matrix top = gram_scalar(model.layers[ju + 1].kernel, PointSet(pass.h[ju + 1])).cwiseProduct(py);
        out.push_back(std::sqrt(std::max(0.0, pencil_max(top, bottom))));
    }
    return out;
}

double top_layer_norm(const VVLayer& layer) { return std::sqrt(std::max(0.0, top_norm_sq(layer))); }

Prop1Report prop1_bound(const LayeredModel& model, const PointSet& x, const Matrix& probes) {
    Prop1Report r;
    r.pf_norm = pf_product_norm(model, x, probes);
    r.top_norm = top_layer_norm(model.layers.back());
    r.inv_n = 1.0 / x.size();
    const auto& first = model.layers.front();
    double trace_sum = 0.0;
    for (int i = 0; i < x.size(); ++i) trace_sum += eval_scalar(first.kernel, x.point(i), x.point(i));
    r.trace_root = std::sqrt(trace_sum * first.M.trace());
    r.total = r.recompute();
    return r;
}

double remark2_bound(double pf_norm, double top_norm, double kappa, double trM1, int n, Remark2Mode mode) {
    require(n >= 1, ErrorCategory::input, "n must be >= 1");
    require(kappa >= 0.0 && trM1 >= 0.0, ErrorCategory::input, "kappa and Tr(M_1) must be nonnegative");
    const double lead = mode == Remark2Mode::printed ? std::sqrt(kappa * trM1) / n : std::sqrt(kappa * trM1 / n);
    return lead * pf_norm * top_norm;
}

double remark2_bound(const LayeredModel& model, const PointSet& x, const Matrix& probes, double kappa, double trM1,
                     Remark2Mode mode) {
    return remark2_bound(pf_product_norm(model, x, probes), top_layer_norm(model.layers.back()), kappa, trM1,
                         x.size(), mode);
}

ObjectiveTerms objective(const LayeredModel& model, const Dataset& data, double lambda1, double lambda2,
                         const Matrix& probes) {
    model.validate();
    check_data(model, data);
    if (lambda1 != 0.0) check_probes(model, data.x, probes);
    return evaluate_terms(model, data, run_pass(model, data.x), lambda1, lambda2, probes);
}

ObjectiveTerms objective(const LayeredModel& model, const Dataset& data, double lambda1, double lambda2) {
    return objective(model, data, lambda1, lambda2, default_probes(data.y));
}

double gradient_norm(const ModelGradient& g) {
    double s = 0.0;
    for (const auto& m : g) s += m.squaredNorm();
    return std::sqrt(s);
}

namespace {

ModelGradient finite_diff_gradient(const LayeredModel& model, const Dataset& data, double lambda1, double lambda2,
                                   const Matrix& probes) {
    LayeredModel work = model;
    ModelGradient g;
    for (std::size_t j = 0; j < work.layers.size(); ++j) {
        Matrix& c = work.layers[j].coeffs;
        Matrix gj(c.rows(), c.cols());
        for (Eigen::Index idx = 0; idx < c.size(); ++idx) {
            double& theta = c.data()[idx];
            const double orig = theta;
            const double h = 1e-5 * (1.0 + std::abs(orig));
            theta = orig + h;
            const double up = evaluate_terms(work, data, run_pass(work, data.x), lambda1, lambda2, probes).total;
            theta = orig - h;
            const double down = evaluate_terms(work, data, run_pass(work, data.x), lambda1, lambda2, probes).total;
            theta = orig;
            gj.data()[idx] = (up - down) / (2.0 * h);
        }
        g.push_back(std::move(gj));
    }
    return g;
}

// d/dH of sum_pq T_pq k(h_p, h_q) for a gaussian k with precision gamma.
Matrix gaussian_pair_grad(const Matrix& t, const Matrix& h, double gamma) {
    return -4.0 * gamma * (t.rowwise().sum().asDiagonal() * h - t * h);
}

}  // namespace

ModelGradient gradient(const LayeredModel& model, const Dataset& data, double lambda1, double lambda2, GradMode mode,
                       const Matrix& probes) {
    model.validate();
    check_data(model, data);
    if (lambda1 != 0.0) check_probes(model, data.x, probes);
    if (mode == GradMode::finite_diff) return finite_diff_gradient(model, data, lambda1, lambda2, probes);

    for (const auto& l : model.layers)
        require(l.kernel.family == KernelFamily::gaussian, ErrorCategory::input,
                "analytic gradients require gaussian layer kernels");
    const Pass pass = run_pass(model, data.x);
    const int L = model.depth();
    const int n = data.size();

    // Seeds for dObjective/dH_{L-1} from the PF term.
    Matrix pf_seed;
    if (lambda1 != 0.0 && L >= 2) {
        const PfPieces pf = pf_pieces(model, pass, probes);
        const PencilSolution sol = solve_pencil(pf.top, pf.bottom);
        const double lam = std::max(0.0, sol.value);
        if (sol.gap < 1e-8 * std::abs(sol.value)) {
            std::ostringstream os;
            os << "top pencil eigenvalue is near-degenerate (gap " << sol.gap << "); using finite differences";
            warn(os.str());
            return finite_diff_gradient(model, data, lambda1, lambda2, probes);
        }
        if (lam > 0.0) {
            const Vector& a = sol.top_vector;
            const Matrix& h = pass.h[static_cast<std::size_t>(L - 1)];
            const Matrix scalar_top = gram_scalar(model.layers.back().kernel, PointSet(h));
            const Matrix t = (a * a.transpose()).cwiseProduct(pf.py).cwiseProduct(scalar_top);
            const double dpdl = 1.0 / (2.0 * std::sqrt(lam));
            pf_seed = lambda1 * dpdl * gaussian_pair_grad(t, h, model.layers.back().kernel.bandwidth);
        }
    }

    ModelGradient g(static_cast<std::size_t>(L));
    Matrix delta = (2.0 / n) * (pass.h.back() - data.y);
    for (int j = L - 1; j >= 0; --j) {
        const auto ju = static_cast<std::size_t>(j);
        const VVLayer& layer = model.layers[ju];
        const Matrix& k = pass.k[ju];
        const Matrix& m = layer.M.matrix();
        g[ju] = k.transpose() * delta * m;
        if (j == 0) break;
        const Matrix e = (delta * m * layer.coeffs.transpose()).cwiseProduct(k);
        const Matrix& h = pass.h[ju];
        const double gamma = layer.kernel.bandwidth;
        delta = -2.0 * gamma * (e.rowwise().sum().asDiagonal() * h - e * layer.anchors.rows());
        if (j == L - 1 && pf_seed.size() > 0) delta += pf_seed;
    }

    if (lambda2 != 0.0) {
        const VVLayer& top = model.layers.back();
        const double norm = top_layer_norm(top);
        if (norm > 0.0) {
            const Matrix gz = gram_scalar(top.kernel, top.anchors);
            g.back() += (lambda2 / norm) * gz * top.coeffs * top.M.matrix();
        }
    }
    return g;
}

ModelGradient gradient(const LayeredModel& model, const Dataset& data, double lambda1, double lambda2,
                       GradMode mode) {
    return gradient(model, data, lambda1, lambda2, mode, default_probes(data.y));
}

LayeredModel init_model(const std::vector<LayerInit>& layers, const PointSet& x, std::uint64_t seed) {
    require(!layers.empty(), ErrorCategory::input, "deep model needs at least one layer");
    require(x.size() >= 1, ErrorCategory::input, "initialization needs at least one input point");
    if (layers.size() < 3) warn("deep model has fewer than 3 layers");
    const CounterRng rng(seed, 31);
    LayeredModel model;
    model.input_dim = x.dim();
    Matrix h = x.rows();
    for (std::size_t j = 0; j < layers.size(); ++j) {
        VVLayer layer;
        layer.kernel = layers[j].kernel;
        layer.kernel.dimension = static_cast<int>(h.cols());
        layer.M = layers[j].M;
        layer.capacity = layers[j].capacity;
        layer.anchors = PointSet(h);
        layer.coeffs.resize(h.rows(), layer.M.dim());
        const CounterRng lr = rng.child(j);
        for (Eigen::Index i = 0; i < layer.coeffs.rows(); ++i)
            for (Eigen::Index c = 0; c < layer.coeffs.cols(); ++c)
                layer.coeffs(i, c) = lr.uniform(-0.1, 0.1, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(c));
        h = cross_gram(layer.kernel, layer.anchors, layer.anchors) * layer.coeffs * layer.M.matrix();
        model.layers.push_back(std::move(layer));
    }
    model.output_dim = model.layers.back().out_dim();
    model.validate();
    return model;
}

namespace {

void project_top(LayeredModel& model) {
    VVLayer& top = model.layers.back();
    if (!top.capacity) return;
    const double norm = top_layer_norm(top);
    if (norm > *top.capacity) top.coeffs *= *top.capacity / norm;
}

TrainStep record(int iteration, const ObjectiveTerms& t, double gnorm, double step) {
    return TrainStep{iteration, t.total, t.data, t.pf_norm, t.top_norm, gnorm, step};
}

void check_finite(const ObjectiveTerms& t, int iteration) {
    if (std::isfinite(t.total)) return;
    std::ostringstream os;
    os << "non-finite objective at iteration " << iteration << " (data=" << t.data << ", pf=" << t.pf_norm
       << ", top=" << t.top_norm << ")";
    fail(ErrorCategory::numeric, os.str());
}

}  // namespace

TrainResult train(const LayeredModel& init, const Dataset& data, const TrainConfig& cfg) {
    cfg.validate();
    init.validate();
    check_data(init, data);
    const Matrix probes = default_probes(data.y);
    TrainResult out;
    out.model = init;
    if (cfg.project_capacity) project_top(out.model);

    // The PF norm is always tracked, even when it carries no weight.
    auto terms_of = [&](const LayeredModel& m) {
        ObjectiveTerms t = objective(m, data, cfg.lambda1, cfg.lambda2, probes);
        if (cfg.lambda1 == 0.0) t.pf_norm = pf_product_norm(m, data.x, probes);
        return t;
    };

    ObjectiveTerms current = terms_of(out.model);
    check_finite(current, 0);
    double step = cfg.step;
    for (int it = 1; it <= cfg.iters; ++it) {
        out.iterations = it;
        const ModelGradient g = gradient(out.model, data, cfg.lambda1, cfg.lambda2, cfg.grad_mode, probes);
        const double gnorm = gradient_norm(g);
        if (!std::isfinite(gnorm)) {
            std::ostringstream os;
            os << "non-finite gradient at iteration " << it << " (objective " << current.total << ")";
            fail(ErrorCategory::numeric, os.str());
        }
        if (gnorm <= cfg.tol) {
            out.trajectory.push_back(record(it, current, gnorm, 0.0));
            out.converged = true;
            return out;
        }
        bool accepted = false;
        for (int halving = 0; halving < 60 && !accepted; ++halving) {
            LayeredModel trial = out.model;
            for (std::size_t j = 0; j < g.size(); ++j) trial.layers[j].coeffs -= step * g[j];
            if (cfg.project_capacity) project_top(trial);
            const ObjectiveTerms t = terms_of(trial);
            if (std::isfinite(t.total) && t.total < current.total && t.total <= current.total - 1e-4 * step * gnorm * gnorm) {
                out.trajectory.push_back(record(it, current, gnorm, step));
                out.model = std::move(trial);
                current = t;
                accepted = true;
            } else {
                step *= 0.5;
            }
        }
        if (!accepted) {
            warn("line search found no decrease; stopping");
            out.trajectory.push_back(record(it, current, gnorm, 0.0));
            return out;
        }
        step = std::min(cfg.step, 2.0 * step);
    }
    out.trajectory.push_back(record(cfg.iters + 1, current, 0.0, 0.0));
    return out;
}

LayeredModel refine_kernel(const LayeredModel& model, const Matrix& A, RefineDirection direction) {
    model.validate();
    require(A.rows() == A.cols() && A.allFinite(), ErrorCategory::input, "refinement matrix must be square and finite");
    for (std::size_t j = 0; j < model.layers.size(); ++j) {
        const Matrix& m = model.layers[j].M.matrix();
        require(m.rows() == A.rows(), ErrorCategory::input,
                "refinement matrix size differs from M of layer " + std::to_string(j + 1));
        const Matrix diff = direction == RefineDirection::shrink ? Matrix(m - A) : Matrix(A - m);
        const double lo = min_eigenvalue(0.5 * (diff + diff.transpose()));
        if (lo < -1e-10) {
            std::ostringstream os;
            os << "refinement (" << refine_direction_name(direction) << ") violates the PSD order on layer " << j + 1
               << ": smallest eigenvalue of " << (direction == RefineDirection::shrink ? "M - A" : "A - M")
               << " is " << lo;
            fail(ErrorCategory::refinement_order, os.str());
        }
    }
    LayeredModel out = model;
    for (auto& layer : out.layers) layer.M = OutputMatrix(A);
    return out;
}

}  // namespace opbounds
