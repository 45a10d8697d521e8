#include "opbounds/koopman_bounds.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "opbounds/error.hpp"
#include "opbounds/warnings.hpp"

namespace opbounds {

std::string_view activation_name(Activation a) {
    switch (a) {
        case Activation::identity: return "identity";
        case Activation::tanh: return "tanh";
        case Activation::sigmoid: return "sigmoid";
    }
    return "unknown";
}

Activation parse_activation(std::string_view name) {
    if (name == "identity") return Activation::identity;
    if (name == "tanh") return Activation::tanh;
    if (name == "sigmoid") return Activation::sigmoid;
    fail(ErrorCategory::input, "unknown activation '" + std::string(name) + "'");
}

std::string_view bound_family_name(BoundFamily f) {
    switch (f) {
        case BoundFamily::lemma1: return "lemma1";
        case BoundFamily::theorem2: return "theorem2";
        case BoundFamily::peeled: return "peeled";
        case BoundFamily::trace: return "trace";
    }
    return "unknown";
}

void NetworkSpec::validate() const {
    require(!layers.empty(), ErrorCategory::input, "network needs at least one layer");
    require(output_dim >= 1, ErrorCategory::input, "network output dimension must be >= 1");
    require(std::isfinite(g_norm) && g_norm >= 0.0, ErrorCategory::input, "g_norm must be >= 0");
    require(g_vector.size() == 0 || g_vector.size() == output_dim, ErrorCategory::input,
            "g vector length must equal the output dimension");
    for (std::size_t l = 0; l < layers.size(); ++l) {
        const auto& layer = layers[l];
        const std::string tag = "layer " + std::to_string(l + 1);
        require(layer.W.size() > 0 && layer.W.allFinite(), ErrorCategory::input, tag + ": W must be finite and nonempty");
        require(layer.a.size() == layer.W.rows(), ErrorCategory::input, tag + ": bias length must equal rows of W");
        require(layer.a.allFinite(), ErrorCategory::input, tag + ": bias is not finite");
        require(layer.activation_koopman_norm > 0.0 && layer.ratio_G > 0.0, ErrorCategory::input,
                tag + ": Koopman norm and G must be positive");
        if (l > 0)
            require(layer.in_dim() == layers[l - 1].out_dim(), ErrorCategory::input,
                    tag + ": input dimension does not chain with the previous layer");
        if (layer.sobolev_order_in <= 0.5 * layer.in_dim())
            warn(tag + ": Sobolev order s_{l-1} is not above d_{l-1}/2");
        if (layer.sobolev_order_out <= 0.5 * layer.out_dim())
            warn(tag + ": Sobolev order s_l is not above d_l/2");
    }
    if (layers.back().activation != Activation::identity)
        warn("activation on the last layer is ignored; g follows b_L o W_L directly");
}

namespace {

double activate(Activation a, double v) {
    switch (a) {
        case Activation::identity: return v;
        case Activation::tanh: return std::tanh(v);
        case Activation::sigmoid: return 1.0 / (1.0 + std::exp(-v));
    }
    return v;
}

Vector singular_values(const Matrix& w) {
    Eigen::JacobiSVD<Matrix> svd(w);
    return svd.singularValues();
}

}  // namespace

Vector forward_features(const NetworkSpec& net, const Eigen::Ref<const Vector>& x, int upto) {
    require(upto >= 0 && upto <= net.depth(), ErrorCategory::input, "layer split out of range");
    Vector h = x;
    for (int l = 0; l < upto; ++l) {
        const auto& layer = net.layers[static_cast<std::size_t>(l)];
        require(h.size() == layer.in_dim(), ErrorCategory::input, "network input dimension mismatch");
        h = layer.W * h + layer.a;
        if (l + 1 < net.depth()) h = h.unaryExpr([&](double v) { return activate(layer.activation, v); });
    }
    return h;
}

PointSet forward_features(const NetworkSpec& net, const PointSet& x, int upto) {
    const int width = upto == 0 ? x.dim() : net.layers[static_cast<std::size_t>(upto - 1)].out_dim();
    Matrix out(x.size(), width);
    for (int i = 0; i < x.size(); ++i) out.row(i) = forward_features(net, x.point(i), upto).transpose();
    return PointSet(std::move(out));
}

Vector evaluate_network(const NetworkSpec& net, const Eigen::Ref<const Vector>& x) {
    const Vector h = forward_features(net, x, net.depth());
    const double bump = std::exp(-h.squaredNorm());
    if (net.g_vector.size() == 0) {
        Vector out = Vector::Zero(net.output_dim);
        out(0) = bump;
        return out;
    }
    return bump * net.g_vector;
}

double spectral_ratio_factor(const Matrix& W, double s_in) {
    require(W.allFinite(), ErrorCategory::input, "weight matrix is not finite");
    const double top = spectral_norm(W);
    if (top == 0.0) {
        warn("spectral ratio factor of a zero matrix: range is {0}, factor set to 1");
        return 1.0;
    }
    return std::pow(std::max(1.0, top), s_in);
}

double det_quarter_root(const Matrix& W) {
    require(W.allFinite(), ErrorCategory::input, "weight matrix is not finite");
    if (W.rows() < W.cols()) fail(ErrorCategory::non_injective, "W has fewer rows than columns; W^T W is singular");
    const Vector sv = singular_values(W);
    const double top = sv.size() > 0 ? sv(0) : 0.0;
    const double bottom = sv.size() > 0 ? sv(sv.size() - 1) : 0.0;
    if (!(top > 0.0) || bottom < 1e-12 * top) {
        std::ostringstream os;
        os << "W is not injective (sigma_min=" << bottom << ", sigma_max=" << top << ")";
        fail(ErrorCategory::non_injective, os.str());
    }
    double root = 1.0;
    for (Eigen::Index i = 0; i < sv.size(); ++i) root *= std::sqrt(sv(i));
    return root;
}

InjectivityVerdict check_injectivity_class(const NetworkSpec& net) {
    require(net.injectivity.has_value(), ErrorCategory::input, "network has no injectivity class (C, D)");
    const auto [C, D] = *net.injectivity;
    InjectivityVerdict out;
    out.all_ok = true;
    for (const auto& layer : net.layers) {
        LayerVerdict v;
        v.dimension_ok = layer.out_dim() >= layer.in_dim();
        const Vector sv = singular_values(layer.W);
        v.norm_ok = sv(0) <= C * (1.0 + 1e-12);
        double det_sqrt = 0.0;
        if (v.dimension_ok) {
            det_sqrt = 1.0;
            for (Eigen::Index i = 0; i < sv.size(); ++i) det_sqrt *= sv(i);
        }
        v.determinant_ok = det_sqrt >= D * (1.0 - 1e-12);
        out.all_ok = out.all_ok && v.ok();
        out.layers.push_back(v);
    }
    return out;
}

double BoundReport::recompute() const {
    double eta = 1.0;
    for (const auto& f : layers) eta *= f.eta();
    switch (family) {
        case BoundFamily::lemma1: return prefactor * eta;
        case BoundFamily::theorem2:
            return eta * (combined->upper_complexity + combined->trace_factor * combined->approximation_term);
        case BoundFamily::peeled:
        case BoundFamily::trace: return prefactor;
    }
    return total;
}

namespace {

LayerFactors layer_factors(const NetworkSpec& net, int index) {
    const auto& layer = net.layers[static_cast<std::size_t>(index)];
    LayerFactors f;
    f.layer = index + 1;
    f.spectral_ratio = spectral_ratio_factor(layer.W, layer.sobolev_order_in);
    f.det_root = det_quarter_root(layer.W);
    // No activation follows the last layer.
    f.koopman_norm = index + 1 < net.depth() ? layer.activation_koopman_norm : 1.0;
    f.ratio_G = layer.ratio_G;
    return f;
}

}  // namespace

BoundReport lemma1_bound(const NetworkSpec& net, double kappa, double trM, int n) {
    net.validate();
    BoundReport r;
    r.family = BoundFamily::lemma1;
    r.label = "at given weights";
    r.prefactor = net.g_norm * trace_bound(kappa, trM, n);
    double eta = 1.0;
    for (int l = 0; l < net.depth(); ++l) {
        r.layers.push_back(layer_factors(net, l));
        eta *= r.layers.back().eta();
    }
    r.total = r.prefactor * eta;
    return r;
}

double rkhs_norm(const DecomposableKernel& kernel, const KernelExpansion& h) {
    require(h.coeffs.rows() == h.anchors.size() && h.coeffs.cols() == kernel.output_dim(), ErrorCategory::input,
            "expansion coefficients do not match anchors/output dimension");
    if (h.anchors.size() == 0) return 0.0;
    const Matrix g = gram_scalar(kernel.scalar, h.anchors);
    const double sq = (h.coeffs.transpose() * g * h.coeffs * kernel.output.matrix()).trace();
    return std::sqrt(std::max(0.0, sq));
}

Matrix evaluate_expansion(const DecomposableKernel& kernel, const KernelExpansion& h, const PointSet& at) {
    if (h.anchors.size() == 0) return Matrix::Zero(at.size(), kernel.output_dim());
    return predict_expansion(kernel, h.anchors, h.coeffs, at);
}

ApproximationTerm approximation_term_mc(const std::vector<KernelExpansion>& upper_class, const PointSet& data_in,
                                        const PointSet& data_mid, const DecomposableKernel& kernel_in,
                                        const DecomposableKernel& kernel_mid, const McConfig& cfg) {
    cfg.validate();
    require(!upper_class.empty(), ErrorCategory::input, "upper function class is empty");
    require(data_in.size() == data_mid.size(), ErrorCategory::input, "input and mid-layer point counts differ");
    require(kernel_in.output_dim() == kernel_mid.output_dim(), ErrorCategory::input,
            "input and mid kernels must share the output dimension");
    const int n = data_in.size();
    const int m = kernel_mid.output_dim();
    const Matrix g_in = gram_operator(kernel_in, data_in);
    const Matrix g_mid = gram_operator(kernel_mid, data_mid);

    const auto k = upper_class.size();
    std::vector<double> norms(k);
    std::vector<double> norms_sq(k);
    std::vector<Vector> values(k);  // h(x~_i) flattened as [i m + j]
    for (std::size_t a = 0; a < k; ++a) {
        norms[a] = rkhs_norm(kernel_mid, upper_class[a]);
        norms_sq[a] = norms[a] * norms[a];
        const Matrix v = evaluate_expansion(kernel_mid, upper_class[a], data_mid);
        Vector flat(static_cast<Eigen::Index>(n) * m);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < m; ++j) flat(i * m + j) = v(i, j);
        values[a] = std::move(flat);
    }

    std::vector<double> sums(k, 0.0);
    ApproximationTerm out;
    double gamma_sq_sum = 0.0;
    for (int d = 0; d < cfg.draws; ++d) {
        const Vector s = rademacher_draw(cfg.seed, static_cast<std::uint64_t>(d), g_in.rows());
        const double v_sq = std::max(0.0, s.dot(g_in * s));
        const double vt_sq = std::max(0.0, s.dot(g_mid * s));
        if (!(vt_sq > 0.0)) {
            ++out.rejected_draws;
            continue;
        }
        ++out.used_draws;
        const double vt = std::sqrt(vt_sq);
        const double gamma = std::sqrt(v_sq) / vt;
        gamma_sq_sum += gamma * gamma;
        for (std::size_t a = 0; a < k; ++a) {
            // <h', v~> by the reproducing property.
            const double inner = s.dot(values[a]);
            double worst = -std::numeric_limits<double>::infinity();
            for (std::size_t b = 0; b < k; ++b) {
                const double coef = gamma * norms[b] / vt;
                worst = std::max(worst, norms_sq[a] - 2.0 * coef * inner + gamma * gamma * norms_sq[b]);
            }
            sums[a] += std::max(0.0, worst);
        }
    }
    if (out.rejected_draws > 0) {
        std::ostringstream os;
        os << "approximation term: " << out.rejected_draws << " draws rejected (|v~| = 0)";
        warn(os.str());
    }
    require(out.used_draws > 0, ErrorCategory::degenerate, "approximation term: every draw had |v~| = 0");
    out.value = std::numeric_limits<double>::infinity();
    for (std::size_t a = 0; a < k; ++a) {
        const double root = std::sqrt(sums[a] / out.used_draws);
        if (root < out.value) {
            out.value = root;
            out.best_index = static_cast<int>(a);
        }
    }
    out.mean_gamma_sq = gamma_sq_sum / out.used_draws;
    return out;
}

BoundReport theorem2_combined_bound(const NetworkSpec& net, int split, const std::vector<KernelExpansion>& upper_class,
                                    const PointSet& data, const DecomposableKernel& kernel_in,
                                    const DecomposableKernel& kernel_mid, const McConfig& cfg) {
    net.validate();
    require(split >= 0 && split <= net.depth(), ErrorCategory::input, "layer split out of range [0, L]");
    require(!upper_class.empty(), ErrorCategory::input, "upper function class is empty");
    const PointSet mid = forward_features(net, data, split);
    require(mid.dim() == kernel_mid.scalar.dimension, ErrorCategory::input,
            "mid kernel dimension must equal the width after the split layer");

    BoundReport r;
    r.family = BoundFamily::theorem2;
    r.label = "at given weights; upper class is a finite kernel-expansion surrogate";
    CombinedPieces pieces;
    pieces.split = split;
    for (int l = 0; l < split; ++l) {
        r.layers.push_back(layer_factors(net, l));
        pieces.eta_product *= r.layers.back().eta();
    }
    std::vector<Matrix> values;
    values.reserve(upper_class.size());
    for (const auto& h : upper_class) values.push_back(evaluate_expansion(kernel_mid, h, mid));
    const McEstimate upper = rademacher_class_mc(values, cfg);
    pieces.upper_complexity = upper.estimate;
    pieces.upper_complexity_se = upper.standard_error;
    pieces.trace_factor = trace_bound(kernel_mid.kappa, kernel_mid.output.trace(), data.size());
    const ApproximationTerm approx = approximation_term_mc(upper_class, data, mid, kernel_in, kernel_mid, cfg);
    pieces.approximation_term = approx.value;
    pieces.approximation_best_index = approx.best_index;
    pieces.rejected_draws = approx.rejected_draws;
    r.total = pieces.eta_product * (pieces.upper_complexity + pieces.trace_factor * pieces.approximation_term);
    r.combined = pieces;
    return r;
}

double peeled_bound(const NetworkSpec& net, int split) {
    require(split >= 0 && split <= net.depth(), ErrorCategory::input, "layer split out of range [0, L]");
    double out = 1.0;
    for (int j = 0; j < net.depth(); ++j) {
        const Matrix& w = net.layers[static_cast<std::size_t>(j)].W;
        out *= j < split ? spectral_norm(w) : w.norm();
    }
    return out;
}

}  // namespace opbounds
