#include "romkit/surrogate.hpp"

#include "romkit/dmd.hpp"
#include "romkit/error.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>

namespace romkit {

namespace {

RankCriterion basis_criterion(const std::optional<RankCriterion>& given, const Config& config, const std::string& section) {
    if (given) return *given;
    const long long rank = config.get_int(section, "rank");
    if (rank > 0) return RankCount{static_cast<Index>(rank)};
    return EnergyFraction{config.get_double(section, "energy")};
}

std::vector<Index> hidden_sizes(const Config& config, const std::string& section) {
    std::vector<Index> out;
    for (long long v : config.get_ints(section, "hidden")) {
        if (v < 1) throw ConfigError(section + ".hidden: layer widths must be >= 1");
        out.push_back(static_cast<Index>(v));
    }
    return out;
}

TrainConfig train_config(const Config& config, const std::string& section, std::uint64_t seed, unsigned threads) {
    TrainConfig t;
    t.epochs = static_cast<Index>(config.get_int(section, "epochs"));
    t.learning_rate = config.get_double(section, "learning_rate");
    t.seed = seed;
    t.threads = threads;
    if (config.has(section, "batch")) t.batch_size = static_cast<Index>(config.get_int(section, "batch"));
    return t;
}

void put_space(Archive& ar, const ParameterSpace& space) {
    ar.put("space.lower", Matrix(space.lower()));
    ar.put("space.upper", Matrix(space.upper()));
}

ParameterSpace get_space(const Archive& ar) { return ParameterSpace(ar.vector("space.lower"), ar.vector("space.upper")); }

Matrix unit_inputs(const ParameterSpace& space, const Matrix& params) {
    Matrix out(params.rows(), params.cols());
    for (Index c = 0; c < params.cols(); ++c) out.col(c) = space.to_unit(params.col(c));
    return out;
}

void check_times(const Vector& expected, const Vector& given) {
    if (expected.size() != given.size() || (expected - given).cwiseAbs().maxCoeff() > 1e-9 * std::max(1.0, expected.cwiseAbs().maxCoeff()))
        throw ConfigError("requested time grid differs from the training time grid");
}

/// Training snapshots grouped by distinct parameter, each group in stored order.
struct Trajectories {
    Matrix params;               ///< p x M
    std::vector<Matrix> states;  ///< one dof x T block per parameter
    Vector times;                ///< shared time grid (size 1 for steady data)
};

Trajectories group(const SnapshotSet& set, bool time_dependent) {
    Trajectories t;
    t.params = set.distinct_params();
    for (Index m = 0; m < t.params.cols(); ++m) {
        const std::vector<Index> cols = set.columns_for(t.params.col(m));
        Matrix block(set.dof(), static_cast<Index>(cols.size()));
        Vector times(static_cast<Index>(cols.size()));
        for (std::size_t k = 0; k < cols.size(); ++k) {
            block.col(static_cast<Index>(k)) = set.snapshots().col(cols[k]);
            times(static_cast<Index>(k)) = set.times()(cols[k]);
        }
        if (!time_dependent && cols.size() != 1)
            throw ConfigError("steady benchmark has several snapshots for one parameter");
        if (m == 0)
            t.times = times;
        else
            check_times(t.times, times);
        t.states.push_back(std::move(block));
    }
    return t;
}

Matrix flatten_coefficients(const ReducedBasis& basis, const std::vector<Matrix>& states) {
    const Index r = basis.size();
    const Index T = states.front().cols();
    Matrix y(r * T, static_cast<Index>(states.size()));
    for (std::size_t m = 0; m < states.size(); ++m) {
        const Matrix c = pod_project(basis, states[m]);
        y.col(static_cast<Index>(m)) = Eigen::Map<const Vector>(c.data(), c.size());
    }
    return y;
}

Matrix lift_flat(const ReducedBasis& basis, const Vector& flat) {
    const Index r = basis.size();
    const Matrix c = Eigen::Map<const Matrix>(flat.data(), r, flat.size() / r);
    return pod_lift(basis, c);
}

void save_basis(Archive& ar, const ReducedBasis& basis) {
    ar.put("basis.modes", basis.modes);
    ar.put("basis.energies", Matrix(basis.energies));
    if (basis.centered()) ar.put("basis.shift", Matrix(basis.shift));
}

ReducedBasis load_basis(const Archive& ar) {
    ReducedBasis b;
    b.modes = ar.matrix("basis.modes");
    b.energies = ar.vector("basis.energies");
    if (ar.has("basis.shift")) b.shift = ar.vector("basis.shift");
    return b;
}

// --- coefficient-chain surrogates ---------------------------------------------------

class ChainSurrogate : public Surrogate {
public:
    ChainSurrogate(ParameterSpace space, ReducedBasis basis, CoefficientRegressor reg, Vector times, bool report_nodes)
        : space_(std::move(space)), basis_(std::move(basis)), reg_(std::move(reg)), times_(std::move(times)),
          report_nodes_(report_nodes) {}

    Matrix predict(const Vector& mu, const Vector& times) const override {
        if (times_.size() > 1) check_times(times_, times);
        const Vector flat = reg_.predict(Matrix(space_.to_unit(mu))).col(0);
        return lift_flat(basis_, flat);
    }

    void save(Archive& ar) const override {
        put_space(ar, space_);
        save_basis(ar, basis_);
        reg_.save(ar, "regressor");
        ar.put("times", Matrix(times_));
        for (std::size_t i = 0; i < dmds.size(); ++i) save_dmd(dmds[i], ar, "dmd" + std::to_string(i));
        ar.put_scalar("dmd.count", double(dmds.size()));
    }

    std::optional<double> node_error() const override {
        if (report_nodes_) return reg_.node_error;
        return std::nullopt;
    }

    static std::unique_ptr<ChainSurrogate> load(const Archive& ar, bool report_nodes) {
        auto s = std::make_unique<ChainSurrogate>(get_space(ar), load_basis(ar), CoefficientRegressor::load(ar, "regressor"),
                                                  ar.vector("times"), report_nodes);
        const auto count = static_cast<std::size_t>(ar.scalar("dmd.count"));
        for (std::size_t i = 0; i < count; ++i) s->dmds.push_back(load_dmd(ar, "dmd" + std::to_string(i)));
        return s;
    }

    std::vector<DmdModel> dmds;  ///< per-parameter fits (DMD chains only)

private:
    ParameterSpace space_;
    ReducedBasis basis_;
    CoefficientRegressor reg_;
    Vector times_;
    bool report_nodes_;
};

std::unique_ptr<Surrogate> fit_chain(const MethodSpec& method, const Config& config, const TrainingContext& ctx) {
    Trajectories traj = group(*ctx.train, ctx.time_dependent);
    std::vector<DmdModel> dmds;
    if (method.kind == MethodKind::dmd_chain) {
        if (!ctx.time_dependent || traj.times.size() < 3)
            throw ConfigError(method.label + ": DMD needs time-dependent trajectories with at least 3 snapshots");
        const RankCriterion dmd_rank = basis_criterion(std::nullopt, config, "dmd");
        for (std::size_t m = 0; m < traj.states.size(); ++m) {
            const double dt = traj.times(1) - traj.times(0);
            DmdModel model = dmd_fit(traj.states[m], dmd_rank, dt, traj.times(0));
            model.param = traj.params.col(static_cast<Index>(m));
            DmdReconstruction rec = dmd_reconstruct(model, traj.times);
            traj.states[m] = rec.states.snapshots();
            dmds.push_back(std::move(model));
        }
    }
    Matrix pooled(ctx.train->dof(), traj.times.size() * static_cast<Index>(traj.states.size()));
    for (std::size_t m = 0; m < traj.states.size(); ++m)
        pooled.middleCols(static_cast<Index>(m) * traj.times.size(), traj.times.size()) = traj.states[m];
    const ReducedBasis basis = pod_fit(pooled, basis_criterion(method.basis, config, "pod"), config.get_bool("pod", "center"));
    const Matrix targets = flatten_coefficients(basis, traj.states);

    CoefficientRegressor reg;
    reg.kind = method.regressor;
    reg.fit(unit_inputs(*ctx.space, traj.params), targets, config, ctx.seed, ctx.threads);
    auto s = std::make_unique<ChainSurrogate>(*ctx.space, basis, std::move(reg), traj.times,
                                              method.regressor == RegressorKind::rbf);
    s->dmds = std::move(dmds);
    return s;
}

// --- raw-state network ----------------------------------------------------------------

class DdnnSurrogate : public Surrogate {
public:
    DdnnSurrogate(ParameterSpace space, Mlp net, Normalizer norm, double time_scale, bool time_dependent)
        : space_(std::move(space)), net_(std::move(net)), norm_(std::move(norm)), time_scale_(time_scale),
          time_dependent_(time_dependent) {}

    static Matrix inputs(const ParameterSpace& space, const Vector& mu, const Vector& times, double time_scale,
                         bool time_dependent) {
        const Vector u = space.to_unit(mu);
        const Index T = time_dependent ? times.size() : 1;
        Matrix x(u.size() + (time_dependent ? 1 : 0), T);
        for (Index k = 0; k < T; ++k) {
            x.col(k).head(u.size()) = u;
            if (time_dependent) x(u.size(), k) = times(k) / time_scale;
        }
        return x;
    }

    Matrix predict(const Vector& mu, const Vector& times) const override {
        return norm_.invert(mlp_forward(net_, inputs(space_, mu, times, time_scale_, time_dependent_)));
    }

    void save(Archive& ar) const override {
        put_space(ar, space_);
        save_mlp(net_, ar, "mlp");
        ar.put("norm.shift", Matrix(norm_.shift));
        ar.put("norm.scale", Matrix(norm_.scale));
        ar.put_scalar("time_scale", time_scale_);
        ar.put_scalar("time_dependent", time_dependent_ ? 1.0 : 0.0);
    }

    static std::unique_ptr<Surrogate> load(const Archive& ar) {
        Normalizer n;
        n.mode = NormalizeMode::center_and_scale;
        n.shift = ar.vector("norm.shift");
        n.scale = ar.vector("norm.scale");
        return std::make_unique<DdnnSurrogate>(get_space(ar), load_mlp(ar, "mlp"), n, ar.scalar("time_scale"),
                                               ar.scalar("time_dependent") != 0.0);
    }

private:
    ParameterSpace space_;
    Mlp net_;
    Normalizer norm_;
    double time_scale_;
    bool time_dependent_;
};

std::unique_ptr<Surrogate> fit_ddnn(const Config& config, const TrainingContext& ctx) {
    const SnapshotSet& set = *ctx.train;
    const double time_scale = ctx.time_dependent ? std::max(1e-300, set.times().cwiseAbs().maxCoeff()) : 1.0;
    Matrix x(set.param_dim() + (ctx.time_dependent ? 1 : 0), set.count());
    for (Index c = 0; c < set.count(); ++c)
        x.col(c) = DdnnSurrogate::inputs(*ctx.space, set.params().col(c), Vector::Constant(1, set.times()(c)), time_scale,
                                         ctx.time_dependent);
    const Normalizer norm = normalize_fit(set.snapshots(), NormalizeMode::center_and_scale);
    NetSpec spec{hidden_sizes(config, "ddnn"), parse_activation(config.get_string("ddnn", "activation")), OutputMap::identity};
    DdnnResult fit = ddnn_fit(x, norm.apply(set.snapshots()), spec, train_config(config, "ddnn", ctx.seed, ctx.threads));
    return std::make_unique<DdnnSurrogate>(*ctx.space, std::move(fit.net), norm, time_scale, ctx.time_dependent);
}

// --- physics-informed network on the thermal block ----------------------------------

class PinnSurrogate : public Surrogate {
public:
    PinnSurrogate(ParameterSpace space, Mlp net, double scale, Matrix nodes)
        : space_(std::move(space)), net_(std::move(net)), scale_(scale), nodes_(std::move(nodes)) {}

    Matrix predict(const Vector& mu, const Vector&) const override {
        const Vector u = space_.to_unit(mu);
        Matrix x(u.size() + 2, nodes_.cols());
        x.topRows(u.size()) = u.replicate(1, nodes_.cols());
        x.bottomRows(2) = nodes_;
        return (scale_ * mlp_forward(net_, x).row(0).transpose()).eval();
    }

    void save(Archive& ar) const override {
        put_space(ar, space_);
        save_mlp(net_, ar, "mlp");
        ar.put_scalar("scale", scale_);
    }

    static std::unique_ptr<Surrogate> load(const Archive& ar, const TrainingContext& ctx) {
        if (!ctx.diffusion) throw ConfigError("pinn surrogate needs the diffusion benchmark grid");
        return std::make_unique<PinnSurrogate>(get_space(ar), load_mlp(ar, "mlp"), ar.scalar("scale"),
                                               diffusion_nodes(*ctx.diffusion));
    }

private:
    ParameterSpace space_;
    Mlp net_;
    double scale_;
    Matrix nodes_;
};

std::unique_ptr<Surrogate> fit_pinn(const Config& config, const TrainingContext& ctx) {
    if (!ctx.diffusion || !ctx.space) throw ConfigError("pinn: only the diffusion-rb benchmark provides a residual");
    const DiffusionConfig dc = *ctx.diffusion;
    const ParameterSpace space = *ctx.space;
    const Index p = space.dim();
    const double scale = std::max(1e-300, max_abs(ctx.train->snapshots()));

    auto conductivity = [dc, space](const Vector& unit_mu, double x, double y) {
        const Index bx = std::min(static_cast<Index>(x * double(dc.blocks_x)), dc.blocks_x - 1);
        const Index by = std::min(static_cast<Index>(y * double(dc.blocks_y)), dc.blocks_y - 1);
        const Index b = bx + dc.blocks_x * by;
        if (b == 0) return 1.0;
        const Index i = b - 1;
        return space.lower()(i) + unit_mu(i) * (space.upper()(i) - space.lower()(i));
    };

    PinnProblem problem;
    problem.param_dim = p;
    problem.space_dim = 2;
    problem.steady = true;
    problem.fd_step = 1e-4 * std::sqrt(2.0);
    const double h = problem.fd_step;
    problem.interior.count = static_cast<Index>(config.get_int("pinn", "interior"));
    problem.interior.sampler = [p, h](std::mt19937_64& rng) {
        std::uniform_real_distribution<double> u01(0.0, 1.0), inner(2.0 * h, 1.0 - 2.0 * h);
        CollocationPoint pt;
        pt.mu = Vector(p);
        for (Index i = 0; i < p; ++i) pt.mu(i) = u01(rng);
        pt.x = Vector(2);
        pt.x << inner(rng), inner(rng);
        return pt;
    };
    problem.interior.contains = [](const CollocationPoint& pt) {
        return pt.x(0) > 0.0 && pt.x(0) < 1.0 && pt.x(1) > 0.0 && pt.x(1) < 1.0;
    };
    problem.interior.residual = [conductivity, dc, scale, h](FieldProbe& probe, const CollocationPoint& pt) {
        const double kappa = conductivity(pt.mu, pt.x(0), pt.x(1));
        return -kappa * scale * probe.laplacian(pt, h) - dc.forcing(pt.x(0), pt.x(1));
    };
    problem.boundary.count = static_cast<Index>(config.get_int("pinn", "boundary"));
    problem.boundary.weight = config.get_double("pinn", "boundary_weight");
    problem.boundary.sampler = [p](std::mt19937_64& rng) {
        std::uniform_real_distribution<double> u01(0.0, 1.0);
        std::uniform_int_distribution<int> side(0, 3);
        CollocationPoint pt;
        pt.mu = Vector(p);
        for (Index i = 0; i < p; ++i) pt.mu(i) = u01(rng);
        const double s = u01(rng);
        pt.x = Vector(2);
        switch (side(rng)) {
        case 0: pt.x << s, 0.0; break;
        case 1: pt.x << 1.0, s; break;
        case 2: pt.x << s, 1.0; break;
        default: pt.x << 0.0, s; break;
        }
        return pt;
    };
    problem.boundary.residual = [scale](FieldProbe& probe, const CollocationPoint& pt) { return scale * probe.value(pt); };

    NetSpec spec{hidden_sizes(config, "pinn"), parse_activation(config.get_string("pinn", "activation")), OutputMap::identity};
    PinnResult fit = pinn_fit(problem, spec, train_config(config, "pinn", ctx.seed, ctx.threads));
    return std::make_unique<PinnSurrogate>(space, std::move(fit.net), scale, diffusion_nodes(dc));
}

}  // namespace

// --- coefficient regressor ------------------------------------------------------------

void CoefficientRegressor::fit(const Matrix& inputs, const Matrix& targets, const Config& config, std::uint64_t seed,
                               unsigned threads) {
    normalizer = normalize_fit(targets, NormalizeMode::center_and_scale);
    const Matrix y = normalizer.apply(targets);
    switch (kind) {
    case RegressorKind::rbf: {
        RbfOptions opt;
        opt.kernel = parse_rbf_kernel(config.get_string("rbf", "kernel"));
        opt.epsilon = config.get_double("rbf", "epsilon");
        opt.tail = parse_rbf_tail(config.get_string("rbf", "tail"));
        rbf = rbf_fit(inputs, y, opt);
        break;
    }
    case RegressorKind::gpr: {
        const std::string prior_tag = config.get_string("gpr", "prior");
        if (prior_tag != "zero" && prior_tag != "constant") throw ConfigError("gpr.prior must be zero or constant");
        const GprPrior prior = prior_tag == "constant" ? GprPrior::constant : GprPrior::zero;
        GprHyper h;
        h.signal_variance = config.get_double("gpr", "signal_variance");
        h.noise = config.get_double("gpr", "noise");
        const double ell = config.get_double("gpr", "length_scale");
        if (ell > 0.0) {
            h.length_scales = Vector::Constant(1, ell);
        } else {
            std::vector<GprHyper> grid;
            for (double l : {0.05, 0.1, 0.2, 0.3, 0.5, 0.75, 1.0, 1.5, 2.0, 3.0, 5.0}) {
                GprHyper g = h;
                g.length_scales = Vector::Constant(1, l);
                grid.push_back(g);
            }
            h = gpr_select_hyperparams(inputs, y, grid, prior);
        }
        gpr = gpr_fit(inputs, y, h, prior);
        break;
    }
    case RegressorKind::ddnn: {
        NetSpec spec{hidden_sizes(config, "ddnn"), parse_activation(config.get_string("ddnn", "activation")), OutputMap::identity};
        net = ddnn_fit(inputs, y, spec, train_config(config, "ddnn", seed, threads)).net;
        break;
    }
    }
    const Matrix pred = predict(inputs);
    node_error = 0.0;
    for (Index c = 0; c < targets.cols(); ++c) {
        const double ref = targets.col(c).norm();
        const double diff = (pred.col(c) - targets.col(c)).norm();
        node_error = std::max(node_error, ref > 0.0 ? diff / ref : diff);
    }
}

Matrix CoefficientRegressor::predict(const Matrix& inputs) const {
    Matrix y;
    switch (kind) {
    case RegressorKind::rbf: y = rbf_eval(rbf, inputs); break;
    case RegressorKind::gpr: y = gpr_predict_mean(gpr, inputs); break;
    case RegressorKind::ddnn: y = mlp_forward(net, inputs); break;
    }
    return normalizer.invert(y);
}

void CoefficientRegressor::save(Archive& ar, const std::string& prefix) const {
    ar.put_text(prefix + ".kind", to_string(kind));
    ar.put(prefix + ".norm.shift", Matrix(normalizer.shift));
    ar.put(prefix + ".norm.scale", Matrix(normalizer.scale));
    ar.put_scalar(prefix + ".node_error", node_error);
    switch (kind) {
    case RegressorKind::rbf: save_rbf(rbf, ar, prefix + ".rbf"); break;
    case RegressorKind::gpr: save_gpr(gpr, ar, prefix + ".gpr"); break;
    case RegressorKind::ddnn: save_mlp(net, ar, prefix + ".mlp"); break;
    }
}

CoefficientRegressor CoefficientRegressor::load(const Archive& ar, const std::string& prefix) {
    CoefficientRegressor r;
    const std::string kind = ar.text(prefix + ".kind");
    r.normalizer.mode = NormalizeMode::center_and_scale;
    r.normalizer.shift = ar.vector(prefix + ".norm.shift");
    r.normalizer.scale = ar.vector(prefix + ".norm.scale");
    r.node_error = ar.scalar(prefix + ".node_error");
    if (kind == "rbf") {
        r.kind = RegressorKind::rbf;
        r.rbf = load_rbf(ar, prefix + ".rbf");
    } else if (kind == "gpr") {
        r.kind = RegressorKind::gpr;
        r.gpr = load_gpr(ar, prefix + ".gpr");
    } else if (kind == "ddnn") {
        r.kind = RegressorKind::ddnn;
        r.net = load_mlp(ar, prefix + ".mlp");
    } else {
        throw IoError("regressor archive: unknown kind '" + kind + "'");
    }
    return r;
}

// --- Galerkin -------------------------------------------------------------------------

Matrix GalerkinSurrogate::predict(const Vector& mu, const Vector&) const { return op_.Z * solve_reduced(op_, mu); }

Vector GalerkinSurrogate::predict_truncated(const Vector& mu, Index n) const {
    const ReducedOperator t = op_.truncated(n);
    return t.Z * solve_reduced(t, mu);
}

void GalerkinSurrogate::save(Archive& ar) const { save_reduced(op_, ar, "rb"); }

// --- dispatch -------------------------------------------------------------------------

std::unique_ptr<Surrogate> fit_surrogate(const MethodSpec& method, const Config& config, const TrainingContext& ctx) {
    if (!ctx.train || ctx.train->count() < 1) throw ConfigError(method.label + ": no training snapshots");
    if (!ctx.space) throw ConfigError(method.label + ": parameter space is unknown");
    switch (method.kind) {
    case MethodKind::pod_galerkin: {
        if (!ctx.problem) throw ConfigError(method.label + ": needs an affine problem (diffusion-rb benchmark)");
        if (config.get_string("galerkin", "basis") == "greedy") {
            Index cap = static_cast<Index>(config.get_int("galerkin", "max_size"));
            if (method.basis)
                if (const auto* r = std::get_if<RankCount>(&*method.basis)) cap = r->value;
            GreedyResult g = greedy_build(*ctx.problem, ctx.train->distinct_params(), config.get_double("galerkin", "tolerance"), cap);
            return std::make_unique<GalerkinSurrogate>(std::move(g.op));
        }
        if (config.get_string("galerkin", "basis") != "pod") throw ConfigError("galerkin.basis must be pod or greedy");
        const ReducedBasis basis = pod_fit(ctx.train->snapshots(), basis_criterion(method.basis, config, "pod"), false);
        return std::make_unique<GalerkinSurrogate>(assemble_reduced(*ctx.problem, basis.modes));
    }
    case MethodKind::ddnn: return fit_ddnn(config, ctx);
    case MethodKind::pinn: return fit_pinn(config, ctx);
    case MethodKind::dmd_chain:
    case MethodKind::pod_chain: return fit_chain(method, config, ctx);
    }
    throw ConfigError("unknown method");
}

std::unique_ptr<Surrogate> load_surrogate(const MethodSpec& method, const Archive& ar, const TrainingContext& ctx) {
    switch (method.kind) {
    case MethodKind::pod_galerkin: return std::make_unique<GalerkinSurrogate>(load_reduced(ar, "rb"));
    case MethodKind::ddnn: return DdnnSurrogate::load(ar);
    case MethodKind::pinn: return PinnSurrogate::load(ar, ctx);
    case MethodKind::dmd_chain:
    case MethodKind::pod_chain: return ChainSurrogate::load(ar, method.regressor == RegressorKind::rbf);
    }
    throw ConfigError("unknown method");
}

}  // namespace romkit
