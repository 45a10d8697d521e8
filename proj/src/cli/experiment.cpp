#include "opbounds/cli/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <sstream>
#include <unistd.h>

#include "opbounds/cli/dataset.hpp"
#include "opbounds/complexity.hpp"
#include "opbounds/error.hpp"
#include "opbounds/koopman_bounds.hpp"
#include "opbounds/rng.hpp"
#include "opbounds/spectral.hpp"
#include "opbounds/version.hpp"
#include "opbounds/warnings.hpp"

namespace opbounds::cli {

std::string_view subcommand_name(Subcommand s) {
    switch (s) {
        case Subcommand::bound_compare: return "bound-compare";
        case Subcommand::sketch_regress: return "sketch-regress";
        case Subcommand::deep_vvrkhs: return "deep-vvrkhs";
        case Subcommand::spectral_report: return "spectral-report";
    }
    return "unknown";
}

Subcommand parse_subcommand(std::string_view name) {
    for (auto s : {Subcommand::bound_compare, Subcommand::sketch_regress, Subcommand::deep_vvrkhs,
                   Subcommand::spectral_report})
        if (subcommand_name(s) == name) return s;
    fail(ErrorCategory::config, "unknown subcommand '" + std::string(name) + "'");
}

namespace {

std::uint64_t sub_seed(std::uint64_t seed, std::uint64_t tag) { return CounterRng(seed, 1000 + tag).bits(0); }

Json vec_json(const Vector& v) {
    Json out = Json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) out.push_back(v(i));
    return out;
}

Json mat_json(const Matrix& m) {
    Json out = Json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) out.push_back(vec_json(m.row(i).transpose()));
    return out;
}

Matrix json_mat(const Json& node, const std::string& path) {
    if (!node.is_array() || node.empty()) config_error(path, "expected a nonempty array of rows");
    const std::size_t cols = node[0].is_array() ? node[0].size() : 0;
    Matrix m(node.size(), cols);
    for (std::size_t i = 0; i < node.size(); ++i) {
        if (!node[i].is_array() || node[i].size() != cols) config_error(path, "rows must have equal length");
        for (std::size_t j = 0; j < cols; ++j) {
            if (!node[i][j].is_number()) config_error(path, "expected numbers");
            m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = node[i][j].get<double>();
        }
    }
    return m;
}

#define SCALAR_KEYS "family", "bandwidth", "smoothness", "amplitude"

ScalarKernelSpec parse_scalar(const Section& s, int dim) {
    ScalarKernelSpec k;
    at_path(s.key_path("family"), [&] { k.family = parse_kernel_family(s.string("family", "gaussian")); });
    k.bandwidth = s.number("bandwidth", 1.0);
    k.smoothness = s.number("smoothness", 0.0);
    k.amplitude = s.number("amplitude", 1.0);
    k.dimension = dim;
    at_path(s.path(), [&] { k.validate(); });
    return k;
}

Json scalar_json(const ScalarKernelSpec& k) {
    Json out;
    out["family"] = std::string(family_name(k.family));
    out["bandwidth"] = k.bandwidth;
    out["smoothness"] = k.smoothness;
    out["amplitude"] = k.amplitude;
    out["dimension"] = k.dimension;
    return out;
}

OutputMatrix parse_output(const Section& s, const char* key, int m) {
    if (!s.has(key)) return OutputMatrix::identity(m);
    if (s.raw(key).is_string() && s.raw(key).get<std::string>() == "identity") return OutputMatrix::identity(m);
    const Matrix mat = s.matrix(key);
    if (mat.rows() != m || mat.cols() != m)
        config_error(s.key_path(key), "expected a " + std::to_string(m) + "x" + std::to_string(m) + " matrix");
    OutputMatrix out;
    at_path(s.key_path(key), [&] { out = OutputMatrix(mat); });
    return out;
}

DecomposableKernel parse_kernel(const Section& root, int d, int m) {
    const Section s = root.child("kernel", {SCALAR_KEYS, "M", "kappa"});
    DecomposableKernel k = DecomposableKernel::with_default_kappa(parse_scalar(s, d), parse_output(s, "M", m));
    if (const auto kappa = s.optional_number("kappa")) {
        if (*kappa < k.scalar.diagonal()) config_error(s.key_path("kappa"), "kappa is below k(x, x)");
        k.kappa = *kappa;
    }
    return k;
}

struct DataBundle {
    Dataset data;
    std::optional<SynthDataset> synth;
    SynthSpec spec;
    std::optional<Dataset> holdout;
};

DataBundle load_dataset(const Section& root, std::uint64_t seed) {
    const Section s = root.child("dataset", {"synthetic", "csv", "holdout"});
    if (s.has("synthetic") == s.has("csv")) config_error(s.path(), "give exactly one of 'synthetic' or 'csv'");
    DataBundle out;
    const int holdout = static_cast<int>(s.integer("holdout", 0));
    if (holdout < 0) config_error(s.key_path("holdout"), "must be nonnegative");
    if (s.has("csv")) {
        at_path(s.key_path("csv"), [&] { out.data = read_dataset_csv(s.resolve(s.string("csv"))); });
        if (holdout > 0) config_error(s.key_path("holdout"), "holdout sets need a synthetic dataset");
        return out;
    }
    const Section g = s.child("synthetic", {"n", "d", "m", "noise", "teacher_anchors", "teacher_scale",
                                            "input_scale", "teacher_kernel"});
    SynthSpec& sp = out.spec;
    sp.n = static_cast<int>(g.integer("n", sp.n));
    sp.d = static_cast<int>(g.integer("d", sp.d));
    sp.m = static_cast<int>(g.integer("m", sp.m));
    sp.noise = g.number("noise", sp.noise);
    sp.teacher_anchors = static_cast<int>(g.integer("teacher_anchors", sp.teacher_anchors));
    sp.teacher_scale = g.number("teacher_scale", sp.teacher_scale);
    sp.input_scale = g.number("input_scale", sp.input_scale);
    if (sp.d < 1) config_error(g.key_path("d"), "must be >= 1");
    if (g.has("teacher_kernel"))
        sp.teacher_kernel = parse_scalar(g.child("teacher_kernel", {SCALAR_KEYS}), sp.d);
    else
        sp.teacher_kernel.dimension = sp.d;
    sp.seed = sub_seed(seed, 1);
    at_path(g.path(), [&] { out.synth = synth_dataset(sp); });
    out.data = out.synth->data;
    if (holdout > 0) out.holdout = synth_holdout(sp, out.synth->teacher, holdout);
    return out;
}

Json data_summary(const Dataset& d) {
    Json out;
    out["n"] = d.size();
    out["d"] = d.x.dim();
    out["m"] = d.output_dim();
    return out;
}

// ---------------------------------------------------------------- spectral

struct SpectralPieces {
    SpectralDecomposition dec;
    double delta_sq = 0.0;
    int d_n = 1;
};

SpectralPieces spectral_pieces(const DecomposableKernel& kernel, const PointSet& x) {
    SpectralPieces p;
    p.dec = eigendecompose_scaled_gram(gram_scalar(kernel, x), x.size());
    p.delta_sq = critical_radius(p.dec.mu);
    p.d_n = statistical_dimension(p.dec.mu, p.delta_sq);
    return p;
}

struct SketchChoice {
    bool identity = false;
    std::optional<int> rows;
    double rows_factor = 8.0;
    double p = 1.0;
    SketchDistribution dist = SketchDistribution::gaussian;
    std::optional<double> scale;
};

SketchChoice parse_sketch(const Section& root) {
    SketchChoice c;
    const Section s = root.child("sketch", {"identity", "rows", "rows_factor", "p", "distribution", "scale"});
    c.identity = s.boolean("identity", false);
    if (s.has("rows")) {
        const auto r = s.integer("rows");
        if (r < 1) config_error(s.key_path("rows"), "must be >= 1");
        c.rows = static_cast<int>(r);
    }
    c.rows_factor = s.number("rows_factor", c.rows_factor);
    if (c.rows_factor <= 0.0) config_error(s.key_path("rows_factor"), "must be positive");
    c.p = s.number("p", c.p);
    if (!(c.p > 0.0 && c.p <= 1.0)) config_error(s.key_path("p"), "must lie in (0, 1]");
    at_path(s.key_path("distribution"), [&] { c.dist = parse_distribution(s.string("distribution", "gaussian")); });
    c.scale = s.optional_number("scale");
    return c;
}

SketchMatrix build_sketch(const SketchChoice& c, int n, int d_n, std::uint64_t seed) {
    if (c.identity) return SketchMatrix::from_dense(Matrix::Identity(n, n));
    SketchSpec spec;
    spec.rows = c.rows ? *c.rows : std::max(1, static_cast<int>(std::ceil(c.rows_factor * d_n)));
    spec.cols = n;
    spec.p = c.p;
    spec.dist = c.dist;
    spec.seed = seed;
    spec.scale = c.scale;
    return make_p_sparsified(spec);
}

Json sketch_json(const SketchChoice& c, const SketchMatrix& s) {
    Json out;
    out["identity"] = c.identity;
    out["rows"] = s.rows();
    out["cols"] = s.cols();
    out["p"] = c.identity ? 1.0 : c.p;
    out["distribution"] = c.identity ? "identity" : std::string(distribution_name(c.dist));
    out["nonzeros"] = static_cast<long long>(s.nonzeros());
    return out;
}

Json satisfiability_json(const SpectralReport& r) {
    Json out;
    out["delta_sq"] = r.delta_sq;
    out["d_n"] = r.d_n;
    out["norm1"] = r.norm1;
    out["norm2"] = r.norm2;
    out["c"] = r.c_used;
    out["c_sqrt_delta_sq"] = r.c_used * std::sqrt(r.delta_sq);
    out["satisfiable"] = r.satisfiable;
    return out;
}

Json run_spectral_report(const Section& root, std::uint64_t seed) {
    const DataBundle data = load_dataset(root, seed);
    const DecomposableKernel kernel = parse_kernel(root, data.data.x.dim(), data.data.output_dim());
    int head = 10;
    if (root.has("spectral")) {
        const Section s = root.child("spectral", {"head"});
        head = static_cast<int>(s.integer("head", head));
        if (head < 1) config_error(s.key_path("head"), "must be >= 1");
    }
    std::optional<SketchChoice> sketch;
    if (root.has("sketch")) sketch = parse_sketch(root);

    SpectralPieces sp;
    at_path("config.kernel", [&] { sp = spectral_pieces(kernel, data.data.x); });
    const int n = data.data.size();
    const Vector& mu = sp.dec.mu;
    Json metrics;
    metrics["data"] = data_summary(data.data);
    metrics["delta_sq"] = sp.delta_sq;
    metrics["d_n"] = sp.d_n;
    metrics["psi_at_delta"] = critical_psi(mu, std::sqrt(sp.delta_sq));
    metrics["mu_sum"] = mu.sum();
    const int h = std::min(head, n);
    metrics["mu_head"] = vec_json(mu.head(h));
    Json decay = Json::array();
    for (int i = 0; i < h; ++i) decay.push_back(mu(0) > 0.0 ? mu(i) / mu(0) : 0.0);
    metrics["decay_ratio_head"] = decay;
    metrics["mu"] = vec_json(mu);
    if (sketch) {
        const SketchMatrix s = build_sketch(*sketch, n, sp.d_n, sub_seed(seed, 2));
        const double c = satisfiability_constant(sketch->identity ? 1.0 : sketch->p);
        SpectralReport r;
        at_path("config.sketch", [&] { r = check_satisfiability(s, sp.dec, sp.d_n, sp.delta_sq, c); });
        metrics["sketch"] = sketch_json(*sketch, s);
        metrics["satisfiability"] = satisfiability_json(r);
    }
    return metrics;
}

// ---------------------------------------------------------------- sketch-regress

Json diagnostics_json(const FitDiagnostics& d) {
    Json out;
    out["solver"] = d.solver;
    out["final_objective"] = d.final_objective;
    out["gradient_norm"] = d.gradient_norm;
    out["iterations"] = d.iterations;
    out["converged"] = d.converged;
    return out;
}

Json run_sketch_regress(const Section& root, std::uint64_t seed) {
    const DataBundle data = load_dataset(root, seed);
    const Dataset& ds = data.data;
    const int n = ds.size();
    const int m = ds.output_dim();
    const DecomposableKernel kernel = parse_kernel(root, ds.x.dim(), m);

    LossSpec loss;
    if (root.has("loss")) {
        const Section s = root.child("loss", {"family", "huber_delta", "quantiles"});
        at_path(s.key_path("family"), [&] { loss.family = parse_loss_family(s.string("family", "squared")); });
        loss.huber_delta = s.number("huber_delta", loss.huber_delta);
        if (s.has("quantiles")) loss.quantiles = s.numbers("quantiles");
        at_path(s.path(), [&] { loss.validate(m); });
    }
    FitConfig fit;
    if (root.has("fit")) {
        const Section s = root.child("fit", {"lambda_n", "max_iters", "step_size", "tol"});
        fit.lambda_n = s.number("lambda_n", fit.lambda_n);
        fit.max_iters = static_cast<int>(s.integer("max_iters", fit.max_iters));
        fit.step_size = s.number("step_size", fit.step_size);
        fit.tol = s.number("tol", fit.tol);
    }
    fit.seed = sub_seed(seed, 6);
    at_path("config.fit", [&] { fit.validate(); });
    const SketchChoice sketch = root.has("sketch") ? parse_sketch(root) : SketchChoice{};

    std::optional<double> cor_c, cor_J, cor_L;
    double conf_delta = 0.05;
    if (root.has("corollary")) {
        const Section s = root.child("corollary", {"c", "conf_delta", "J", "L"});
        cor_c = s.optional_number("c");
        cor_J = s.optional_number("J");
        cor_L = s.optional_number("L");
        conf_delta = s.number("conf_delta", conf_delta);
    }

    SpectralPieces sp;
    at_path("config.kernel", [&] { sp = spectral_pieces(kernel, ds.x); });
    const SketchMatrix s = build_sketch(sketch, n, sp.d_n, sub_seed(seed, 2));
    const double c_sat = satisfiability_constant(sketch.identity ? 1.0 : sketch.p);
    SpectralReport sat;
    at_path("config.sketch", [&] { sat = check_satisfiability(s, sp.dec, sp.d_n, sp.delta_sq, c_sat); });

    FittedModel full, sketched;
    at_path("config.fit", [&] {
        full = fit_full(kernel, ds, loss, fit);
        sketched = fit_sketched(kernel, ds, loss, fit, s);
    });
    const Matrix pf = full.predict(ds.x);
    const Matrix ps = sketched.predict(ds.x);

    auto model_json = [&](const FittedModel& f, const Matrix& pred) {
        Json out;
        out["empirical_risk"] = empirical_risk(pred, ds.y, loss);
        if (data.holdout) out["holdout_risk"] = empirical_risk(f, *data.holdout, loss);
        out["diagnostics"] = diagnostics_json(f.diagnostics);
        return out;
    };

    Json metrics;
    metrics["data"] = data_summary(ds);
    metrics["loss"] = std::string(loss_name(loss.family));
    Json spectral;
    spectral["delta_sq"] = sp.delta_sq;
    spectral["d_n"] = sp.d_n;
    metrics["spectral"] = spectral;
    metrics["sketch"] = sketch_json(sketch, s);
    metrics["satisfiability"] = satisfiability_json(sat);
    metrics["full"] = model_json(full, pf);
    metrics["sketched"] = model_json(sketched, ps);
    metrics["max_prediction_gap"] = (pf - ps).cwiseAbs().maxCoeff();
    if (data.holdout) {
        metrics["teacher_holdout_risk"] =
            empirical_risk(data.synth->teacher.predict(data.holdout->x), data.holdout->y, loss);
    }

    Json cor;
    const std::optional<double> J = cor_J ? cor_J : lipschitz_constant(loss, m);
    if (!J) {
        warn("excess-risk bound skipped: the squared loss is not Lipschitz (set corollary.J to force a value)");
        cor["available"] = false;
        cor["reason"] = "loss has no global Lipschitz constant";
    } else {
        ExcessRiskBound b;
        at_path("config.corollary", [&] {
            b = excess_risk_bound_rhs(J, cor_c.value_or(c_sat), fit.lambda_n, kernel.output.opnorm(), sp.delta_sq,
                                      kernel.kappa, kernel.output.trace(), n, conf_delta, cor_L);
        });
        cor["available"] = true;
        cor["value"] = b.value;
        cor["C"] = b.C;
        cor["fit_term"] = b.fit_term;
        cor["ridge_term"] = b.ridge_term;
        cor["complexity_term"] = b.complexity_term;
        cor["confidence_term"] = b.confidence_term;
        cor["J"] = *J;
        cor["L"] = b.L_used;
        cor["conf_delta"] = conf_delta;
    }
    metrics["excess_risk_bound"] = cor;
    return metrics;
}

// ---------------------------------------------------------------- bound-compare

NetworkSpec parse_network(const Section& root, int d, int m) {
    const Section s = root.child("network", {"layers", "g_norm", "g_vector", "injectivity"});
    NetworkSpec net;
    net.output_dim = m;
    for (const Section& l : s.children("layers", {"W", "a", "activation", "koopman_norm", "s_in", "s_out", "G"})) {
        LayerSpec layer;
        layer.W = l.matrix("W");
        layer.a = l.has("a") ? l.vector("a") : Vector::Zero(layer.W.rows());
        at_path(l.key_path("activation"),
                [&] { layer.activation = parse_activation(l.string("activation", "identity")); });
        layer.activation_koopman_norm = l.number("koopman_norm", 1.0);
        layer.sobolev_order_in = l.number("s_in", 1.0);
        layer.sobolev_order_out = l.number("s_out", 1.0);
        layer.ratio_G = l.number("G", 1.0);
        net.layers.push_back(std::move(layer));
    }
    if (net.layers.empty()) config_error(s.key_path("layers"), "needs at least one layer");
    if (net.layers.front().in_dim() != d) config_error(s.key_path("layers") + "[0].W", "column count must equal d");
    if (s.has("g_vector")) net.g_vector = s.vector("g_vector");
    if (s.has("g_norm") && s.raw("g_norm").is_string()) {
        if (s.string("g_norm") != "auto") config_error(s.key_path("g_norm"), "expected a number or \"auto\"");
        const auto& last = net.layers.back();
        const double v = net.g_vector.size() ? net.g_vector.norm() : 1.0;
        at_path(s.key_path("g_norm"),
                [&] { net.g_norm = v * sobolev_norm_gaussian(last.out_dim(), last.sobolev_order_out); });
    } else {
        net.g_norm = s.number("g_norm", 1.0);
    }
    if (s.has("injectivity")) {
        const Section inj = s.child("injectivity", {"C", "D"});
        net.injectivity = InjectivityClass{inj.number("C"), inj.number("D")};
    }
    at_path(s.path(), [&] { net.validate(); });
    return net;
}

Json factors_json(const std::vector<LayerFactors>& layers) {
    Json out = Json::array();
    for (const auto& f : layers) {
        Json j;
        j["layer"] = f.layer;
        j["spectral_ratio"] = f.spectral_ratio;
        j["det_root"] = f.det_root;
        j["koopman_norm"] = f.koopman_norm;
        j["G"] = f.ratio_G;
        j["eta"] = f.eta();
        out.push_back(j);
    }
    return out;
}

Json mc_json(const McEstimate& e) {
    Json out;
    out["estimate"] = e.estimate;
    out["standard_error"] = e.standard_error;
    out["draws"] = e.draws;
    out["exact"] = e.exact;
    return out;
}

Json run_bound_compare(const Section& root, std::uint64_t seed) {
    const DataBundle data = load_dataset(root, seed);
    const Dataset& ds = data.data;
    const int n = ds.size();
    const int m = ds.output_dim();
    const DecomposableKernel kernel = parse_kernel(root, ds.x.dim(), m);
    const NetworkSpec net = parse_network(root, ds.x.dim(), m);

    int split = net.depth();
    McConfig mc;
    mc.draws = 2000;
    std::optional<Section> mid_section;
    int class_count = 8;
    int class_anchors = 10;
    double capacity = 1.0;
    if (root.has("bound_compare")) {
        const Section s = root.child("bound_compare", {"split", "mc_draws", "kernel_mid", "upper_class"});
        split = static_cast<int>(s.integer("split", split));
        if (split < 0 || split > net.depth())
            config_error(s.key_path("split"), "must lie in [0, " + std::to_string(net.depth()) + "]");
        mc.draws = static_cast<int>(s.integer("mc_draws", mc.draws));
        if (s.has("kernel_mid")) mid_section = s.child("kernel_mid", {SCALAR_KEYS});
        if (s.has("upper_class")) {
            const Section u = s.child("upper_class", {"count", "anchors", "capacity"});
            class_count = static_cast<int>(u.integer("count", class_count));
            class_anchors = static_cast<int>(u.integer("anchors", class_anchors));
            capacity = u.number("capacity", capacity);
            if (class_count < 1) config_error(u.key_path("count"), "must be >= 1");
            if (class_anchors < 1) config_error(u.key_path("anchors"), "must be >= 1");
            if (!(capacity > 0.0)) config_error(u.key_path("capacity"), "must be positive");
        }
    }
    mc.seed = sub_seed(seed, 3);
    at_path("config.bound_compare.mc_draws", [&] { mc.validate(); });
    const int mid_dim = split == 0 ? ds.x.dim() : net.layers[static_cast<std::size_t>(split - 1)].out_dim();
    ScalarKernelSpec mid_scalar = kernel.scalar;
    mid_scalar.dimension = mid_dim;
    if (mid_section) mid_scalar = parse_scalar(*mid_section, mid_dim);
    at_path("config.bound_compare.kernel_mid", [&] { mid_scalar.validate(); });
    const DecomposableKernel kernel_mid = DecomposableKernel::with_default_kappa(mid_scalar, kernel.output);

    Json metrics;
    metrics["data"] = data_summary(ds);
    metrics["kappa"] = kernel.kappa;
    metrics["trace_M"] = kernel.output.trace();

    const double trace = trace_bound(kernel.kappa, kernel.output.trace(), n);
    Json tr;
    tr["value"] = trace;
    metrics["trace"] = tr;

    McEstimate ball;
    at_path("config.kernel", [&] { ball = rademacher_ball_mc(gram_operator(kernel, ds.x), n, mc); });
    metrics["rademacher_ball"] = mc_json(ball);

    BoundReport l1;
    at_path("config.network", [&] { l1 = lemma1_bound(net, kernel.kappa, kernel.output.trace(), n); });
    Json lj;
    lj["total"] = l1.total;
    lj["prefactor"] = l1.prefactor;
    lj["g_norm"] = net.g_norm;
    lj["label"] = l1.label;
    lj["layers"] = factors_json(l1.layers);
    metrics["lemma1"] = lj;

    // Surrogate upper class: random expansions on the mid features with graded norms.
    const PointSet mid = forward_features(net, ds.x, split);
    const int a = std::min(class_anchors, n);
    const PointSet anchors(mid.rows().topRows(a));
    const CounterRng crng(sub_seed(seed, 5), 0);
    std::vector<KernelExpansion> upper;
    for (int k = 0; k < class_count; ++k) {
        KernelExpansion h{anchors, Matrix(a, m)};
        const CounterRng r = crng.child(static_cast<std::uint64_t>(k));
        for (int i = 0; i < a; ++i)
            for (int j = 0; j < m; ++j) h.coeffs(i, j) = r.gaussian(static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(j));
        const double norm = rkhs_norm(kernel_mid, h);
        if (norm > 0.0) h.coeffs *= capacity * (k + 1) / (class_count * norm);
        upper.push_back(std::move(h));
    }
    BoundReport t2;
    at_path("config.bound_compare", [&] { t2 = theorem2_combined_bound(net, split, upper, ds.x, kernel, kernel_mid, mc); });
    const CombinedPieces& cp = *t2.combined;
    Json tj;
    tj["total"] = t2.total;
    tj["split"] = cp.split;
    tj["eta_product"] = cp.eta_product;
    tj["upper_complexity"] = cp.upper_complexity;
    tj["upper_complexity_se"] = cp.upper_complexity_se;
    tj["trace_factor"] = cp.trace_factor;
    tj["approximation_term"] = cp.approximation_term;
    tj["approximation_best_index"] = cp.approximation_best_index;
    tj["rejected_draws"] = cp.rejected_draws;
    tj["upper_class_size"] = class_count;
    tj["label"] = t2.label;
    tj["layers"] = factors_json(t2.layers);
    metrics["theorem2"] = tj;

    Json pj;
    pj["value"] = peeled_bound(net, split);
    pj["split"] = split;
    pj["label"] = "up to a universal constant";
    metrics["peeled"] = pj;

    if (net.injectivity) {
        const InjectivityVerdict v = check_injectivity_class(net);
        Json ij;
        ij["all_ok"] = v.all_ok;
        Json arr = Json::array();
        for (const auto& lv : v.layers) {
            Json j;
            j["dimension_ok"] = lv.dimension_ok;
            j["norm_ok"] = lv.norm_ok;
            j["determinant_ok"] = lv.determinant_ok;
            arr.push_back(j);
        }
        ij["layers"] = arr;
        metrics["injectivity"] = ij;
    }
    return metrics;
}

// ---------------------------------------------------------------- deep-vvrkhs

Json terms_json(const ObjectiveTerms& t) {
    Json out;
    out["objective"] = t.total;
    out["data"] = t.data;
    out["pf_norm"] = t.pf_norm;
    out["top_norm"] = t.top_norm;
    return out;
}

Json bounds_json(const LayeredModel& model, const PointSet& x, const Matrix& probes) {
    const Prop1Report p = prop1_bound(model, x, probes);
    const auto& first = model.layers.front();
    const double kappa = first.kernel.diagonal();
    const double trM1 = first.M.trace();
    Json out;
    out["pf_norm"] = p.pf_norm;
    out["top_norm"] = p.top_norm;
    out["trace_root"] = p.trace_root;
    out["prop1"] = p.total;
    out["remark2_printed"] = remark2_bound(p.pf_norm, p.top_norm, kappa, trM1, x.size(), Remark2Mode::printed);
    out["remark2_consistent"] = remark2_bound(p.pf_norm, p.top_norm, kappa, trM1, x.size(), Remark2Mode::consistent);
    out["label"] = "at given model";
    return out;
}

struct RefineRequest {
    std::string path;
    std::optional<Matrix> A;
    std::optional<double> scale;
    RefineDirection direction = RefineDirection::shrink;
};

Json run_deep(const Section& root, std::uint64_t seed, std::vector<SideOutput>& side) {
    const DataBundle data = load_dataset(root, seed);
    const Dataset& ds = data.data;
    const int m = ds.output_dim();
    const Section s = root.child("deep", {"layers", "train", "epochs", "lambda1_sweep", "refine", "load_checkpoint",
                                          "save_checkpoint"});

    TrainConfig cfg;
    if (s.has("train")) {
        const Section t = s.child("train", {"lambda1", "lambda2", "step", "iters", "grad_mode", "tol",
                                           "project_capacity"});
        cfg.lambda1 = t.number("lambda1", cfg.lambda1);
        cfg.lambda2 = t.number("lambda2", cfg.lambda2);
        cfg.step = t.number("step", cfg.step);
        cfg.iters = static_cast<int>(t.integer("iters", cfg.iters));
        at_path(t.key_path("grad_mode"), [&] { cfg.grad_mode = parse_grad_mode(t.string("grad_mode", "analytic")); });
        cfg.tol = t.number("tol", cfg.tol);
        cfg.project_capacity = t.boolean("project_capacity", false);
        at_path(t.path(), [&] { cfg.validate(); });
    }
    cfg.seed = sub_seed(seed, 4);
    const int epochs = static_cast<int>(s.integer("epochs", 1));
    if (epochs < 0) config_error(s.key_path("epochs"), "must be nonnegative");
    std::vector<double> sweep;
    if (s.has("lambda1_sweep")) {
        sweep = s.numbers("lambda1_sweep");
        for (double v : sweep)
            if (v < 0.0) config_error(s.key_path("lambda1_sweep"), "weights must be nonnegative");
    }
    std::vector<RefineRequest> refines;
    if (s.has("refine")) {
        for (const Section& r : s.children("refine", {"A", "scale", "direction"})) {
            RefineRequest req;
            req.path = r.path();
            if (r.has("A") == r.has("scale")) config_error(r.path(), "give exactly one of 'A' or 'scale'");
            if (r.has("A")) req.A = r.matrix("A");
            if (r.has("scale")) req.scale = r.number("scale");
            at_path(r.key_path("direction"),
                    [&] { req.direction = parse_refine_direction(r.string("direction", "shrink")); });
            refines.push_back(std::move(req));
        }
    }

    LayeredModel init;
    if (s.has("load_checkpoint")) {
        if (s.has("layers")) config_error(s.key_path("layers"), "cannot be combined with load_checkpoint");
        const auto file = s.resolve(s.string("load_checkpoint"));
        std::ifstream in(file);
        if (!in) fail(ErrorCategory::io, s.key_path("load_checkpoint") + ": cannot open " + file.string());
        Json node;
        try {
            node = Json::parse(in);
        } catch (const std::exception& e) {
            config_error(s.key_path("load_checkpoint"), std::string("invalid JSON: ") + e.what());
        }
        init = model_from_json(node, s.key_path("load_checkpoint"));
        if (init.input_dim != ds.x.dim() || init.output_dim != m)
            config_error(s.key_path("load_checkpoint"), "checkpoint dimensions do not match the dataset");
    } else {
        std::vector<LayerInit> layers;
        const auto secs = s.children("layers", {"kernel", "width", "M", "capacity"});
        if (secs.empty()) config_error(s.key_path("layers"), "needs at least one layer");
        int width_in = ds.x.dim();
        for (std::size_t j = 0; j < secs.size(); ++j) {
            const Section& l = secs[j];
            LayerInit li;
            li.kernel = l.has("kernel") ? parse_scalar(l.child("kernel", {SCALAR_KEYS}), width_in)
                                        : ScalarKernelSpec{KernelFamily::gaussian, 1.0, 0.0, width_in, 1.0};
            int width = static_cast<int>(l.integer("width", m));
            if (l.has("M") && !l.raw("M").is_string()) width = static_cast<int>(l.matrix("M").rows());
            if (width < 1) config_error(l.key_path("width"), "must be >= 1");
            if (j + 1 == secs.size() && width != m) config_error(l.path(), "last layer width must equal m");
            li.M = parse_output(l, "M", width);
            li.capacity = l.optional_number("capacity");
            layers.push_back(std::move(li));
            width_in = width;
        }
        at_path(s.key_path("layers"), [&] { init = init_model(layers, ds.x, cfg.seed); });
    }

    const Matrix probes = default_probes(ds.y);
    Json metrics;
    metrics["data"] = data_summary(ds);
    metrics["depth"] = init.depth();
    Json tc;
    tc["lambda1"] = cfg.lambda1;
    tc["lambda2"] = cfg.lambda2;
    tc["grad_mode"] = std::string(grad_mode_name(cfg.grad_mode));
    metrics["train_config"] = tc;

    ObjectiveTerms initial;
    at_path("config.deep", [&] { initial = objective(init, ds, cfg.lambda1, cfg.lambda2, probes); });
    metrics["initial"] = terms_json(initial);
    metrics["initial_bounds"] = bounds_json(init, ds.x, probes);

    LayeredModel model = init;
    Json epochs_json = Json::array();
    Json trajectory = Json::array();
    for (int e = 1; e <= epochs; ++e) {
        TrainResult tr;
        at_path("config.deep.train", [&] { tr = train(model, ds, cfg); });
        model = std::move(tr.model);
        for (const auto& st : tr.trajectory) {
            Json j;
            j["epoch"] = e;
            j["iteration"] = st.iteration;
            j["objective"] = st.objective;
            j["data"] = st.data;
            j["pf_norm"] = st.pf_norm;
            j["top_norm"] = st.top_norm;
            j["gradient_norm"] = st.gradient_norm;
            j["step"] = st.step;
            trajectory.push_back(j);
        }
        Json ej;
        ej["epoch"] = e;
        ej["iterations"] = tr.iterations;
        ej["converged"] = tr.converged;
        ej["terms"] = terms_json(objective(model, ds, cfg.lambda1, cfg.lambda2, probes));
        ej["bounds"] = bounds_json(model, ds.x, probes);
        epochs_json.push_back(ej);
    }
    metrics["epochs"] = epochs_json;
    metrics["trajectory"] = trajectory;
    ObjectiveTerms final_terms = objective(model, ds, cfg.lambda1, cfg.lambda2, probes);
    final_terms.pf_norm = pf_product_norm(model, ds.x, probes);
    metrics["final"] = terms_json(final_terms);
    metrics["final_bounds"] = bounds_json(model, ds.x, probes);
    Json layer_pf = Json::array();
    for (double v : pf_layer_norms(model, ds.x, probes)) layer_pf.push_back(v);
    metrics["pf_layer_norms"] = layer_pf;
    Json caps = Json::array();
    for (const auto& l : model.layers) caps.push_back(l.capacity ? Json(*l.capacity) : Json(nullptr));
    metrics["capacities"] = caps;

    if (!sweep.empty()) {
        Json sj = Json::array();
        std::vector<std::pair<double, double>> finals;
        for (std::size_t i = 0; i < sweep.size(); ++i) {
            TrainConfig c = cfg;
            c.lambda1 = sweep[i];
            LayeredModel mdl = init;
            for (int e = 0; e < std::max(1, epochs); ++e) {
                TrainResult tr;
                at_path(s.key_path("lambda1_sweep") + "[" + std::to_string(i) + "]", [&] { tr = train(mdl, ds, c); });
                mdl = std::move(tr.model);
            }
            const ObjectiveTerms t = objective(mdl, ds, c.lambda1, c.lambda2, probes);
            const double pf = pf_product_norm(mdl, ds.x, probes);
            Json j;
            j["lambda1"] = sweep[i];
            j["objective"] = t.total;
            j["data"] = t.data;
            j["pf_norm"] = pf;
            j["top_norm"] = t.top_norm;
            sj.push_back(j);
            finals.emplace_back(sweep[i], pf);
        }
        std::sort(finals.begin(), finals.end());
        bool monotone = true;
        for (std::size_t i = 1; i < finals.size(); ++i)
            if (finals[i].second > finals[i - 1].second * (1.0 + 1e-12)) monotone = false;
        Json sweep_json;
        sweep_json["runs"] = sj;
        sweep_json["pf_nonincreasing"] = monotone;
        metrics["lambda1_sweep"] = sweep_json;
    }

    if (!refines.empty()) {
        const Prop1Report base = prop1_bound(model, ds.x, probes);
        const auto& first = model.layers.front();
        const double kappa = first.kernel.diagonal();
        Json rj = Json::array();
        for (const auto& req : refines) {
            const Matrix A = req.A ? *req.A : Matrix(*req.scale * first.M.matrix());
            LayeredModel refined;
            at_path(req.path, [&] { refined = refine_kernel(model, A, req.direction); });
            Json j;
            j["direction"] = std::string(refine_direction_name(req.direction));
            j["trace_M"] = first.M.trace();
            j["trace_A"] = A.trace();
            j["remark2_consistent_frozen"] = remark2_bound(base.pf_norm, base.top_norm, kappa, A.trace(), ds.size(),
                                                           Remark2Mode::consistent);
            j["remark2_printed_frozen"] = remark2_bound(base.pf_norm, base.top_norm, kappa, A.trace(), ds.size(),
                                                        Remark2Mode::printed);
            j["frozen_ratio"] = std::sqrt(A.trace() / first.M.trace());
            j["refit_free_bounds"] = bounds_json(refined, ds.x, probes);
            j["terms"] = terms_json(objective(refined, ds, cfg.lambda1, cfg.lambda2, probes));
            rj.push_back(j);
        }
        metrics["refinements"] = rj;
    }

    if (s.has("save_checkpoint"))
        side.push_back({s.resolve(s.string("save_checkpoint")), model_to_json(model).dump(2) + "\n"});
    return metrics;
}

void flatten(const Json& node, const std::string& prefix, std::ostringstream& os) {
    if (node.is_object()) {
        for (const auto& item : node.items()) flatten(item.value(), prefix.empty() ? item.key() : prefix + "." + item.key(), os);
    } else if (node.is_array()) {
        for (std::size_t i = 0; i < node.size(); ++i) flatten(node[i], prefix + "[" + std::to_string(i) + "]", os);
    } else {
        std::string v = node.is_string() ? node.get<std::string>() : node.dump();
        if (v.find_first_of(",\"\n") != std::string::npos) {
            std::string q = "\"";
            for (char c : v) q += c == '"' ? std::string("\"\"") : std::string(1, c);
            v = q + "\"";
        }
        os << prefix << ',' << v << '\n';
    }
}

}  // namespace

RunResult run(const Json& config, const RunOptions& opts) {
    const auto start = std::chrono::steady_clock::now();
    drain_warnings();
    const std::string name(subcommand_name(opts.subcommand));
    RunResult result;

    const Section root = [&] {
        switch (opts.subcommand) {
            case Subcommand::bound_compare:
                return Section(config, "config", {"subcommand", "seed", "dataset", "kernel", "network", "bound_compare"},
                               opts.base_dir);
            case Subcommand::sketch_regress:
                return Section(config, "config",
                               {"subcommand", "seed", "dataset", "kernel", "loss", "sketch", "fit", "corollary"},
                               opts.base_dir);
            case Subcommand::deep_vvrkhs:
                return Section(config, "config", {"subcommand", "seed", "dataset", "deep"}, opts.base_dir);
            case Subcommand::spectral_report:
                break;
        }
        return Section(config, "config", {"subcommand", "seed", "dataset", "kernel", "sketch", "spectral"},
                       opts.base_dir);
    }();
    if (root.has("subcommand") && root.string("subcommand") != name)
        config_error(root.key_path("subcommand"), "config is for '" + root.string("subcommand") + "', not '" + name + "'");
    std::uint64_t seed = 0;
    if (root.has("seed")) {
        const Json& v = root.raw("seed");
        if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0))
            config_error(root.key_path("seed"), "expected a nonnegative integer");
        seed = v.get<std::uint64_t>();
    }
    if (opts.seed) seed = *opts.seed;

    Json metrics;
    switch (opts.subcommand) {
        case Subcommand::bound_compare: metrics = run_bound_compare(root, seed); break;
        case Subcommand::sketch_regress: metrics = run_sketch_regress(root, seed); break;
        case Subcommand::deep_vvrkhs: metrics = run_deep(root, seed, result.side_outputs); break;
        case Subcommand::spectral_report: metrics = run_spectral_report(root, seed); break;
    }

    Json& rec = result.record;
    rec["tool"] = "opbounds";
    rec["version"] = kVersion;
    rec["subcommand"] = name;
    rec["seed"] = seed;
    rec["config"] = config;
    rec["metrics"] = std::move(metrics);
    Json w = Json::array();
    for (auto& msg : drain_warnings()) w.push_back(std::move(msg));
    rec["warnings"] = std::move(w);
    if (opts.wall_clock)
        rec["wall_clock_seconds"] =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    return result;
}

std::string record_to_csv(const Json& record) {
    std::ostringstream os;
    os << "metric,value\n";
    flatten(record.at("metrics"), "", os);
    return os.str();
}

Json model_to_json(const LayeredModel& model) {
    Json out;
    out["input_dim"] = model.input_dim;
    out["output_dim"] = model.output_dim;
    Json layers = Json::array();
    for (const auto& l : model.layers) {
        Json j;
        j["kernel"] = scalar_json(l.kernel);
        j["M"] = mat_json(l.M.matrix());
        j["anchors"] = mat_json(l.anchors.rows());
        j["coeffs"] = mat_json(l.coeffs);
        j["capacity"] = l.capacity ? Json(*l.capacity) : Json(nullptr);
        layers.push_back(j);
    }
    out["layers"] = layers;
    return out;
}

LayeredModel model_from_json(const Json& node, const std::string& path) {
    const Section s(node, path, {"input_dim", "output_dim", "layers"});
    LayeredModel model;
    model.input_dim = static_cast<int>(s.integer("input_dim"));
    model.output_dim = static_cast<int>(s.integer("output_dim"));
    for (const Section& l : s.children("layers", {"kernel", "M", "anchors", "coeffs", "capacity"})) {
        VVLayer layer;
        const Section k = l.child("kernel", {SCALAR_KEYS, "dimension"});
        layer.kernel = parse_scalar(k, static_cast<int>(k.integer("dimension")));
        at_path(l.key_path("M"), [&] { layer.M = OutputMatrix(json_mat(l.raw("M"), l.key_path("M"))); });
        layer.anchors = PointSet(json_mat(l.raw("anchors"), l.key_path("anchors")));
        layer.coeffs = json_mat(l.raw("coeffs"), l.key_path("coeffs"));
        layer.capacity = l.optional_number("capacity");
        model.layers.push_back(std::move(layer));
    }
    at_path(path, [&] { model.validate(); });
    return model;
}

void write_atomic(const std::filesystem::path& file, const std::string& content) {
    std::filesystem::path tmp = file;
    tmp += ".tmp." + std::to_string(::getpid());
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) fail(ErrorCategory::io, "cannot write " + tmp.string());
        out << content;
        out.flush();
        if (!out) fail(ErrorCategory::io, "write failed for " + tmp.string());
    }
    std::error_code ec;
    std::filesystem::rename(tmp, file, ec);
    if (ec) {
        std::filesystem::remove(tmp, ec);
        fail(ErrorCategory::io, "cannot move result into place at " + file.string());
    }
}

}  // namespace opbounds::cli
